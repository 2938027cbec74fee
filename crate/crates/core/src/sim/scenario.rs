use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::gossip::{Protocol, DEFAULT_STORAGE_LIMIT};

pub const HOUR_MS: u64 = 60 * 60 * 1000;
pub const DAY_MS: u64 = 24 * HOUR_MS;

/// Which client behaviour a run simulates. The two `None*` variants are the
/// non-gossiping baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimProtocol {
    Gossip(Protocol),
    /// Plain CT client that remembers audited SCTs.
    NoneSaveScts,
    /// Plain CT client that audits on every connection.
    NoneNoSave,
}

impl SimProtocol {
    pub const ALL: [SimProtocol; 4] = [
        SimProtocol::Gossip(Protocol::SthOnly),
        SimProtocol::Gossip(Protocol::SthAndProof),
        SimProtocol::NoneSaveScts,
        SimProtocol::NoneNoSave,
    ];

    pub fn gossip(self) -> Option<Protocol> {
        match self {
            SimProtocol::Gossip(p) => Some(p),
            _ => None,
        }
    }
}

impl fmt::Display for SimProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimProtocol::Gossip(p) => write!(f, "{}", p.number()),
            SimProtocol::NoneSaveScts => f.write_str("none_save_scts"),
            SimProtocol::NoneNoSave => f.write_str("none_no_save"),
        }
    }
}

impl std::str::FromStr for SimProtocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "1" => Ok(SimProtocol::Gossip(Protocol::SthOnly)),
            "2" => Ok(SimProtocol::Gossip(Protocol::SthAndProof)),
            "none_save_scts" => Ok(SimProtocol::NoneSaveScts),
            "none_no_save" => Ok(SimProtocol::NoneNoSave),
            other => Err(format!("unknown protocol {other:?}")),
        }
    }
}

impl Serialize for SimProtocol {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SimProtocol {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u8),
            Str(String),
        }
        let s = match Raw::deserialize(d)? {
            Raw::Num(n) => n.to_string(),
            Raw::Str(s) => s,
        };
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Negative binomial parameters: `r` successes, success probability `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbParams {
    pub r: f64,
    pub p: f64,
}

impl NbParams {
    pub fn is_valid(&self) -> bool {
        self.r.is_finite() && self.r > 0.0 && self.p > 0.0 && self.p < 1.0
    }

    pub fn mean(&self) -> f64 {
        self.r * (1.0 - self.p) / self.p
    }

    pub fn variance(&self) -> f64 {
        self.r * (1.0 - self.p) / (self.p * self.p)
    }

    /// Parameters with the given mean and shape `r`.
    pub fn with_mean(r: f64, mean: f64) -> NbParams {
        NbParams { r, p: r / (r + mean) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainWeight {
    pub server: u32,
    pub views_per_million: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryModel {
    pub name: String,
    pub client_count: u32,
    /// Whole hours east of UTC.
    pub timezone_offset: i32,
    /// Indexed by local hour of day.
    pub hourly_nb_params: Vec<NbParams>,
    pub domain_popularity: Vec<DomainWeight>,
    /// Probability that a connection goes to a domain outside the modelled
    /// set; such connections are skipped.
    pub outside_top_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerModel {
    pub id: u32,
    pub gossiping: bool,
    pub ct: bool,
    /// Days relative to simulation start (negative: issued before). Drawn
    /// uniformly from the previous 24 months when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cert_issued_day: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackKind {
    /// Simulated client ids that see the forked tree.
    SplitWorldTargeted { victims: BTreeSet<u32> },
    /// Every client of the listed countries (by index) sees the forked tree.
    SplitWorldPartition { countries: BTreeSet<u32> },
    /// The server's next certificate gets an SCT but is never merged.
    SctWithhold { server: u32 },
    Unresponsive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    #[serde(flatten)]
    pub kind: AttackKind,
    /// Activated at the first MMD boundary at or after this point.
    pub start_day: f64,
}

fn default_storage_limit() -> usize {
    DEFAULT_STORAGE_LIMIT
}

fn default_retry_limit() -> u32 {
    3
}

fn default_mmd_hours() -> u64 {
    2
}

fn default_background() -> u32 {
    20
}

fn default_validity() -> f64 {
    730.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub duration_days: f64,
    #[serde(default = "default_mmd_hours")]
    pub mmd_hours: u64,
    pub countries: Vec<CountryModel>,
    pub servers: Vec<ServerModel>,
    pub gossip_factor: f64,
    pub protocol: SimProtocol,
    #[serde(default = "default_storage_limit")]
    pub storage_limit: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackSpec>,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default)]
    pub consent: bool,
    /// Certificates from outside the modelled set merged per MMD, so the
    /// tree keeps growing.
    #[serde(default = "default_background")]
    pub background_certs_per_mmd: u32,
    #[serde(default = "default_validity")]
    pub cert_validity_days: f64,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("gossip factor {0} outside [0, 1]")]
    GossipFactor(f64),
    #[error("mmd_hours must be positive")]
    Mmd,
    #[error("duration must cover at least one MMD")]
    Duration,
    #[error("country {0}: expected 24 hourly parameter pairs, got {1}")]
    HourCount(String, usize),
    #[error("country {0}, hour {1}: need r > 0 and 0 < p < 1")]
    NbParams(String, usize),
    #[error("country {0}: outside fraction must lie in [0, 1]")]
    OutsideFraction(String),
    #[error("country {0}: views per million must be non-negative and sum to at most 1,000,000")]
    Popularity(String),
    #[error("unknown server id {0}")]
    UnknownServer(u32),
    #[error("duplicate server id {0}")]
    DuplicateServer(u32),
    #[error("attack needs a non-empty target set")]
    EmptyTargets,
    #[error("attack target {0} does not exist")]
    UnknownTarget(u32),
    #[error("certificate validity must be positive")]
    Validity,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn mmd_ms(&self) -> u64 {
        self.mmd_hours * HOUR_MS
    }

    pub fn mmd_count(&self) -> u64 {
        ((self.duration_days * DAY_MS as f64) / self.mmd_ms() as f64).floor() as u64
    }

    /// Gossiping (simulated) clients per country.
    pub fn simulated_clients(&self) -> Vec<u32> {
        self.countries.iter().map(|c| (c.client_count as f64 * self.gossip_factor).round() as u32).collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(0.0..=1.0).contains(&self.gossip_factor) {
            return Err(ScenarioError::GossipFactor(self.gossip_factor));
        }
        if self.mmd_hours == 0 {
            return Err(ScenarioError::Mmd);
        }
        if !self.duration_days.is_finite() || self.mmd_count() < 1 {
            return Err(ScenarioError::Duration);
        }
        if !(self.cert_validity_days > 0.0) {
            return Err(ScenarioError::Validity);
        }
        let mut ids = BTreeSet::new();
        for s in &self.servers {
            if !ids.insert(s.id) {
                return Err(ScenarioError::DuplicateServer(s.id));
            }
        }
        for c in &self.countries {
            if c.hourly_nb_params.len() != 24 {
                return Err(ScenarioError::HourCount(c.name.clone(), c.hourly_nb_params.len()));
            }
            if let Some(h) = c.hourly_nb_params.iter().position(|p| !p.is_valid()) {
                return Err(ScenarioError::NbParams(c.name.clone(), h));
            }
            if !(0.0..=1.0).contains(&c.outside_top_fraction) {
                return Err(ScenarioError::OutsideFraction(c.name.clone()));
            }
            let sum: f64 = c.domain_popularity.iter().map(|d| d.views_per_million).sum();
            if c.domain_popularity.iter().any(|d| !(d.views_per_million >= 0.0)) || sum > 1_000_000.0 {
                return Err(ScenarioError::Popularity(c.name.clone()));
            }
            if let Some(d) = c.domain_popularity.iter().find(|d| !ids.contains(&d.server)) {
                return Err(ScenarioError::UnknownServer(d.server));
            }
        }
        if let Some(attack) = &self.attack {
            let clients: u32 = self.simulated_clients().iter().sum();
            match &attack.kind {
                AttackKind::SplitWorldTargeted { victims } => {
                    if victims.is_empty() {
                        return Err(ScenarioError::EmptyTargets);
                    }
                    if let Some(&v) = victims.iter().find(|&&v| v >= clients) {
                        return Err(ScenarioError::UnknownTarget(v));
                    }
                }
                AttackKind::SplitWorldPartition { countries } => {
                    if countries.is_empty() {
                        return Err(ScenarioError::EmptyTargets);
                    }
                    if let Some(&c) = countries.iter().find(|&&c| c as usize >= self.countries.len()) {
                        return Err(ScenarioError::UnknownTarget(c));
                    }
                }
                AttackKind::SctWithhold { server } => {
                    if !ids.contains(server) {
                        return Err(ScenarioError::UnknownServer(*server));
                    }
                }
                AttackKind::Unresponsive => {}
            }
        }
        Ok(())
    }

    /// The desk-scale configuration: two countries, 2,000 clients, 100
    /// servers of which 8 gossip, f = 10%, 30 days, split-world attack on
    /// five clients at day 2.
    pub fn desk_default() -> Scenario {
        // about a third of all page views, as for the HTTPS-ready top domains
        let gossiping: BTreeSet<u32> = [0, 2, 5, 9, 14, 22, 35, 60].into();
        let servers = (0..100)
            .map(|id| ServerModel { id, gossiping: gossiping.contains(&id), ct: id % 10 != 7, cert_issued_day: None })
            .collect();
        // Zipf-like popularity
        let norm: f64 = (1..=100).map(|k| 1.0 / k as f64).sum();
        let popularity: Vec<DomainWeight> = (0..100)
            .map(|id| DomainWeight { server: id, views_per_million: (400_000.0 / norm / (id + 1) as f64).round() })
            .collect();
        let hourly: Vec<NbParams> = (0..24)
            .map(|h| {
                let phase = std::f64::consts::TAU * (h as f64 - 4.0) / 24.0;
                NbParams::with_mean(1.5, 0.5 + 2.5 * (0.5 - 0.5 * phase.cos()))
            })
            .collect();
        let country = |name: &str, tz: i32| CountryModel {
            name: name.into(),
            client_count: 1000,
            timezone_offset: tz,
            hourly_nb_params: hourly.clone(),
            domain_popularity: popularity.clone(),
            outside_top_fraction: 0.2,
        };
        Scenario {
            name: "desk".into(),
            seed: 1,
            duration_days: 30.0,
            mmd_hours: 2,
            countries: vec![country("north", 1), country("west", -5)],
            servers,
            gossip_factor: 0.1,
            protocol: SimProtocol::Gossip(Protocol::SthAndProof),
            storage_limit: DEFAULT_STORAGE_LIMIT,
            attack: Some(AttackSpec {
                kind: AttackKind::SplitWorldTargeted { victims: (0..5).collect() },
                start_day: 2.0,
            }),
            retry_limit: 3,
            consent: false,
            background_certs_per_mmd: 20,
            cert_validity_days: 730.0,
        }
    }
}
