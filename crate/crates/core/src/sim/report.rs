//! Per-MMD metrics, the event log and run summaries.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scenario::SimProtocol;
use crate::anomaly::LogStatus;
use crate::gossip::LogQuery;
use crate::log::PartyId;

/// Number of individually tracked tree-head ages in the histogram.
pub const HISTOGRAM_AGES: usize = 12;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub mmd: u64,
    pub time_ms: u64,
    pub tree_size: u64,
    /// `sth_age[k]`: clients whose newest tree head is `k` MMDs old.
    pub sth_age: [u64; HISTOGRAM_AGES],
    pub sth_age_older: u64,
    pub sth_age_none: u64,
    pub https_connections: u64,
    pub ct_connections: u64,
    pub get_sth_queries: u64,
    pub audit_proof_queries: u64,
    pub client_gossip_consistency_queries: u64,
    pub server_gossip_consistency_queries: u64,
    pub audit_consistency_queries: u64,
    pub alert_queries: u64,
    pub gossip_messages: u64,
    pub map_entries: u64,
    pub alerts_raised: u64,
    pub monitor_status: Option<LogStatus>,
}

impl MetricsRow {
    pub fn clients(&self) -> u64 {
        self.sth_age.iter().sum::<u64>() + self.sth_age_older + self.sth_age_none
    }

    /// Fraction of simulated clients holding the newest tree head.
    pub fn latest_fraction(&self) -> f64 {
        match self.clients() {
            0 => 0.0,
            n => self.sth_age[0] as f64 / n as f64,
        }
    }

    pub fn gossip_consistency_queries(&self) -> u64 {
        self.client_gossip_consistency_queries + self.server_gossip_consistency_queries
    }

    pub fn csv_header() -> String {
        let mut h = String::from("mmd,time_ms,tree_size");
        for k in 0..HISTOGRAM_AGES {
            let _ = write!(h, ",sth_age_{k}");
        }
        h.push_str(
            ",sth_age_older,sth_age_none,latest_fraction,https_connections,ct_connections,get_sth_queries,\
             audit_proof_queries,client_gossip_consistency_queries,server_gossip_consistency_queries,\
             audit_consistency_queries,alert_queries,gossip_messages,map_entries,alerts_raised,monitor_status",
        );
        h
    }

    pub fn csv_line(&self) -> String {
        let mut l = format!("{},{},{}", self.mmd, self.time_ms, self.tree_size);
        for v in self.sth_age {
            let _ = write!(l, ",{v}");
        }
        let status = match self.monitor_status {
            None => "",
            Some(LogStatus::Trusted) => "trusted",
            Some(LogStatus::Suspect) => "suspect",
            Some(LogStatus::Untrusted) => "untrusted",
        };
        let _ = write!(
            l,
            ",{},{},{:.6},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.sth_age_older,
            self.sth_age_none,
            self.latest_fraction(),
            self.https_connections,
            self.ct_connections,
            self.get_sth_queries,
            self.audit_proof_queries,
            self.client_gossip_consistency_queries,
            self.server_gossip_consistency_queries,
            self.audit_consistency_queries,
            self.alert_queries,
            self.gossip_messages,
            self.map_entries,
            self.alerts_raised,
            status
        );
        l
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertKind {
    Warning,
    Inconsistency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    RunStart { protocol: SimProtocol, seed: u64, simulated_clients: u32, mmds: u64 },
    TreeHead { mmd: u64, time_ms: u64, tree_size: u64, root: String },
    AttackStart { mmd: u64, time_ms: u64, attack: String },
    Renewal { mmd: u64, time_ms: u64, server: u32 },
    Intercept { mmd: u64, time_ms: u64, client: u32, server: u32 },
    /// An exchange that issued a consistency query or raised an alert.
    Exchange { mmd: u64, time_ms: u64, client: u32, server: u32, client_queries: Vec<LogQuery>, server_queries: Vec<LogQuery> },
    Alert { mmd: u64, time_ms: u64, party: PartyId, kind: AlertKind, reason: Option<String> },
    MonitorStatus { mmd: u64, time_ms: u64, status: LogStatus },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub attack_start_mmd: Option<u64>,
    pub first_warning_mmd: Option<u64>,
    pub first_inconsistency_mmd: Option<u64>,
    pub confirmed_at_monitor_mmd: Option<u64>,
    pub latency_mmds: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub protocol: String,
    pub seed: u64,
    pub simulated_clients: u32,
    pub mmds: u64,
    pub https_connections: u64,
    pub ct_connections: u64,
    pub get_sth_queries: u64,
    pub client_gossip_consistency_queries: u64,
    pub server_gossip_consistency_queries: u64,
    pub gossip_messages: u64,
    /// Gossip-induced log queries over HTTPS connections.
    pub overhead: f64,
    pub mean_latest_fraction: f64,
    /// Mean client count per age bucket: 12 ages, then older, then none.
    pub mean_histogram: Vec<f64>,
    pub max_map_entries: u64,
    pub max_p2_message_bytes: usize,
    pub final_monitor_status: Option<LogStatus>,
    pub detection: Option<Detection>,
}

/// Everything a run produces.
#[derive(Debug, Clone, Default)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub events: Vec<Event>,
    pub summary: Summary,
}

impl MetricsReport {
    pub fn metrics_csv(&self) -> String {
        let mut out = MetricsRow::csv_header();
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn events_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        s.push('\n');
        s
    }

    /// Writes metrics.csv, summary.json and events.jsonl into `dir`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let write = |name: &str, body: &str| -> io::Result<()> {
            let mut f = io::BufWriter::new(std::fs::File::create(dir.join(name))?);
            f.write_all(body.as_bytes())?;
            f.flush()
        };
        write("metrics.csv", &self.metrics_csv())?;
        write("summary.json", &self.summary_json())?;
        write("events.jsonl", &self.events_jsonl())
    }

    pub fn overhead(&self) -> f64 {
        self.summary.overhead
    }
}

/// MMDs between the attack start and the first status change at the
/// monitor; `None` without an attack or without detection.
pub fn compute_detection_latency(events: &[Event]) -> Option<u64> {
    let start = events.iter().find_map(|e| match e {
        Event::AttackStart { mmd, .. } => Some(*mmd),
        _ => None,
    })?;
    let confirmed = events.iter().find_map(|e| match e {
        Event::MonitorStatus { mmd, status, .. } if *status != LogStatus::Trusted && *mmd >= start => Some(*mmd),
        _ => None,
    })?;
    Some(confirmed - start)
}

/// Parses an events.jsonl body.
pub fn parse_events(jsonl: &str) -> Result<Vec<Event>, serde_json::Error> {
    jsonl.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}
