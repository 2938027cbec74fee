use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::report::{AlertKind, Detection, Event, MetricsReport, MetricsRow, Summary, HISTOGRAM_AGES};
use super::scenario::{AttackKind, Scenario, SimProtocol, DAY_MS, HOUR_MS};
use super::traffic::{ConnectionSampler, DomainPicker};
use crate::anomaly::{AlertMessage, LogStatus, MonitorState};
use crate::gossip::{
    ClientNode, ClientStateP1, LogQuery, Message, NodeConfig, NodeOutcome, QueryPurpose, ServerNode, Session,
    UpdateOutcome,
};
use crate::log::{
    LogBehaviorPolicy, LogConfig, LogService, LogVerifier, PartyId, SignedCertificateTimestamp, SignedTreeHead,
};
use crate::merkle::leaf_hash;
use crate::wire::encode_message;

enum ClientKind {
    Gossip(ClientNode),
    Plain { state: ClientStateP1, remember: bool },
}

struct SimClient {
    id: u32,
    country: usize,
    kind: ClientKind,
    /// The next CT connection is served by the attacker.
    intercept: bool,
}

impl SimClient {
    fn party(&self) -> PartyId {
        PartyId::Client(self.id)
    }

    fn best_sth(&self) -> Option<&SignedTreeHead> {
        match &self.kind {
            ClientKind::Gossip(node) => node.state.best_sth(),
            ClientKind::Plain { state, .. } => state.sth.as_ref(),
        }
    }
}

struct SimServer {
    id: u32,
    gossiping: bool,
    node: Option<ServerNode>,
    sct: Option<SignedCertificateTimestamp>,
    /// Relative to simulation start.
    expiry_ms: i64,
    renewals: u32,
}

struct Engine<'s> {
    scenario: &'s Scenario,
    mmd_ms: u64,
    sim_start: u64,
    log: LogService,
    verifier: LogVerifier,
    node_config: NodeConfig,
    clients: Vec<SimClient>,
    servers: Vec<SimServer>,
    server_index: HashMap<u32, usize>,
    monitor: MonitorState,
    attack_sct: Option<SignedCertificateTimestamp>,
    events: Vec<Event>,
    row: MetricsRow,
    detection: Option<Detection>,
    max_p2_bytes: usize,
}

/// Runs a scenario to completion. Identical scenarios give identical
/// reports.
pub fn run(scenario: &Scenario) -> MetricsReport {
    let mut setup = ChaCha8Rng::seed_from_u64(scenario.seed);
    // traffic has its own stream so that runs differing only in protocol see
    // the same connections
    let mut traffic = ChaCha8Rng::seed_from_u64(scenario.seed);
    traffic.set_stream(1);

    let mut engine = Engine::new(scenario, &mut setup);
    let mmds = scenario.mmd_count();
    let attack_mmd = scenario.attack.as_ref().map(|a| (a.start_day * DAY_MS as f64 / engine.mmd_ms as f64).ceil() as u64);

    let samplers: Vec<Vec<ConnectionSampler>> = scenario
        .countries
        .iter()
        .map(|c| c.hourly_nb_params.iter().map(|&p| ConnectionSampler::new(p)).collect())
        .collect();
    let pickers: Vec<DomainPicker> =
        scenario.countries.iter().map(|c| DomainPicker::new(&c.domain_popularity, c.outside_top_fraction)).collect();

    let mut rows = Vec::with_capacity(mmds as usize);
    let mut connections: Vec<(usize, u32)> = Vec::new();
    for k in 0..mmds {
        let t0 = engine.sim_start + k * engine.mmd_ms;
        engine.row = MetricsRow { mmd: k, time_ms: t0, ..MetricsRow::default() };
        engine.boundary(k, t0, attack_mmd == Some(k));

        for j in 0..scenario.mmd_hours {
            let abs_hour = k * scenario.mmd_hours + j;
            let utc_hour = (abs_hour % 24) as i64;
            connections.clear();
            for (idx, client) in engine.clients.iter().enumerate() {
                let country = &scenario.countries[client.country];
                let local = (utc_hour + country.timezone_offset as i64).rem_euclid(24) as usize;
                let n = samplers[client.country][local].sample(&mut traffic);
                for _ in 0..n {
                    if let Some(server) = pickers[client.country].pick(&mut traffic) {
                        connections.push((idx, server));
                    }
                }
            }
            connections.shuffle(&mut traffic);
            let hour_start = t0 + j * HOUR_MS;
            let spacing = (HOUR_MS - 1) / connections.len().max(1) as u64;
            for (i, &(client, server)) in connections.iter().enumerate() {
                engine.exchange(k, hour_start + 1 + i as u64 * spacing, client, server);
            }
        }
        engine.snapshot();
        rows.push(engine.row.clone());
    }

    engine.finish(rows)
}

impl<'s> Engine<'s> {
    fn new(scenario: &'s Scenario, setup: &mut ChaCha8Rng) -> Engine<'s> {
        let mmd_ms = scenario.mmd_ms();
        let key_seed: [u8; 32] = setup.random();
        let mut log = LogService::new(&LogConfig { key_seed, mmd_ms, start_ms: 0 });
        let verifier = log.key().verifier();
        let gossip = scenario.protocol.gossip();

        let mut servers = Vec::with_capacity(scenario.servers.len());
        for model in &scenario.servers {
            let issued_day = model.cert_issued_day.unwrap_or_else(|| -setup.random_range(0.0..730.0));
            let expiry_ms = ((issued_day + scenario.cert_validity_days) * DAY_MS as f64) as i64;
            let sct = model.ct.then(|| log.submit(format!("cert/{}/0", model.id).as_bytes()).expect("honest at start"));
            let node = match gossip {
                Some(p) if model.gossiping => {
                    Some(ServerNode::new(PartyId::Server(model.id), p, scenario.storage_limit, mmd_ms))
                }
                _ => None,
            };
            servers.push(SimServer { id: model.id, gossiping: node.is_some(), node, sct, expiry_ms, renewals: 0 });
        }
        let server_index = servers.iter().enumerate().map(|(i, s)| (s.id, i)).collect();

        let mut clients = Vec::new();
        let mut next_id = 0u32;
        for (country, count) in scenario.simulated_clients().into_iter().enumerate() {
            for _ in 0..count {
                let kind = match scenario.protocol {
                    SimProtocol::Gossip(p) => ClientKind::Gossip(ClientNode::new(PartyId::Client(next_id), p, mmd_ms)),
                    SimProtocol::NoneSaveScts => ClientKind::Plain { state: ClientStateP1::default(), remember: true },
                    SimProtocol::NoneNoSave => ClientKind::Plain { state: ClientStateP1::default(), remember: false },
                };
                clients.push(SimClient { id: next_id, country, kind, intercept: false });
                next_id += 1;
            }
        }

        let events = vec![Event::RunStart {
            protocol: scenario.protocol,
            seed: scenario.seed,
            simulated_clients: next_id,
            mmds: scenario.mmd_count(),
        }];
        Engine {
            scenario,
            mmd_ms,
            sim_start: mmd_ms,
            log,
            verifier,
            node_config: NodeConfig { mmd_ms, retry_limit: scenario.retry_limit, consent: scenario.consent },
            clients,
            servers,
            server_index,
            monitor: MonitorState::new(mmd_ms),
            attack_sct: None,
            events,
            row: MetricsRow::default(),
            detection: scenario.attack.as_ref().map(|_| Detection::default()),
            max_p2_bytes: 0,
        }
    }

    /// Log work at an MMD boundary: attack activation, renewals, background
    /// submissions, then the merge.
    fn boundary(&mut self, k: u64, t0: u64, activate: bool) {
        self.log.set_time(t0);
        if activate {
            self.activate_attack(k, t0);
        }
        let elapsed = (k * self.mmd_ms) as i64;
        let validity = (self.scenario.cert_validity_days * DAY_MS as f64) as i64;
        for s in self.servers.iter_mut().filter(|s| s.sct.is_some()) {
            if s.expiry_ms <= elapsed {
                while s.expiry_ms <= elapsed {
                    s.expiry_ms += validity;
                }
                s.renewals += 1;
                if let Ok(sct) = self.log.submit(format!("cert/{}/{}", s.id, s.renewals).as_bytes()) {
                    s.sct = Some(sct);
                    self.events.push(Event::Renewal { mmd: k, time_ms: t0, server: s.id });
                }
            }
        }
        for i in 0..self.scenario.background_certs_per_mmd {
            let _ = self.log.submit(format!("background/{k}/{i}").as_bytes());
        }
        let sth = self.log.advance_mmd().expect("the log holds genesis certificates");
        self.events.push(Event::TreeHead { mmd: k, time_ms: t0, tree_size: sth.tree_size, root: sth.root_hash.to_hex() });
    }

    fn activate_attack(&mut self, k: u64, t0: u64) {
        let Some(attack) = &self.scenario.attack else { return };
        let victims: BTreeSet<u32> = match &attack.kind {
            AttackKind::SplitWorldTargeted { victims } => victims.clone(),
            AttackKind::SplitWorldPartition { countries } => {
                self.clients.iter().filter(|c| countries.contains(&(c.country as u32))).map(|c| c.id).collect()
            }
            AttackKind::SctWithhold { server } => {
                let idx = self.server_index[server];
                let s = &mut self.servers[idx];
                s.renewals += 1;
                let cert = format!("cert/{}/{}", s.id, s.renewals);
                self.log.configure(LogBehaviorPolicy::WithholdSct { certs: [leaf_hash(cert.as_bytes())].into() });
                s.sct = self.log.submit(cert.as_bytes()).ok();
                BTreeSet::new()
            }
            AttackKind::Unresponsive => {
                self.log.configure(LogBehaviorPolicy::Unresponsive { after_ms: t0 });
                BTreeSet::new()
            }
        };
        if !victims.is_empty() {
            self.log.configure(LogBehaviorPolicy::SplitWorld { victims: victims.iter().map(|&v| PartyId::Client(v)).collect() });
            self.attack_sct = Some(self.log.submit_attack(b"attack-cert"));
            for c in self.clients.iter_mut().filter(|c| victims.contains(&c.id)) {
                c.intercept = true;
            }
        }
        let name = serde_json::to_value(&attack.kind).ok().and_then(|v| v["kind"].as_str().map(String::from));
        self.events.push(Event::AttackStart { mmd: k, time_ms: t0, attack: name.unwrap_or_default() });
        if let Some(d) = self.detection.as_mut() {
            d.attack_start_mmd = Some(k);
        }
    }

    fn track_p2(&mut self, m: &Message) {
        if matches!(m, Message::P2(_)) {
            self.max_p2_bytes = self.max_p2_bytes.max(encode_message(m).len());
        }
    }

    fn exchange(&mut self, k: u64, now: u64, client_idx: usize, server_id: u32) {
        self.log.set_time(now);
        let server_idx = self.server_index[&server_id];
        self.row.https_connections += 1;

        let mut sct = self.servers[server_idx].sct.clone();
        let mut intercepted = false;
        if sct.is_some() {
            self.row.ct_connections += 1;
            let client = &mut self.clients[client_idx];
            if client.intercept {
                client.intercept = false;
                intercepted = true;
                sct = self.attack_sct.clone();
                self.events.push(Event::Intercept { mmd: k, time_ms: now, client: client.id, server: server_id });
            }
        }

        let client = &mut self.clients[client_idx];
        let client_party = client.party();
        let client_id = client.id;
        let server = &mut self.servers[server_idx];
        let gossip_with_server = server.gossiping && !intercepted;
        let mut gossip_messages = 0;
        let mut p2_seen: Vec<Message> = Vec::new();

        let (client_out, server_out) = match &mut client.kind {
            ClientKind::Gossip(node) => {
                let m1 = node.get_message();
                let m2 = match (&server.node, gossip_with_server) {
                    (Some(s), true) => s.get_message(&m1, &self.verifier),
                    _ => Message::Empty,
                };
                let mut handle = self.log.handle(client_party);
                let mut session = Session::new(&mut handle, &self.verifier, self.node_config, client_party, now);
                let client_out = node.update(sct.as_ref(), &m2, &mut session);
                let server_out = match (&mut server.node, gossip_with_server) {
                    (Some(s), true) => {
                        let mut handle = self.log.handle(s.id);
                        let mut session = Session::new(&mut handle, &self.verifier, self.node_config, s.id, now);
                        gossip_messages += u64::from(!m1.is_empty()) + u64::from(!m2.is_empty());
                        p2_seen.push(m1.clone());
                        Some(s.update(&m1, &mut session))
                    }
                    _ => None,
                };
                p2_seen.push(m2);
                (client_out, server_out)
            }
            ClientKind::Plain { state, remember } => {
                let out = match &sct {
                    Some(t) => {
                        let mut handle = self.log.handle(client_party);
                        let mut session =
                            Session::new(&mut handle, &self.verifier, self.node_config, client_party, now);
                        state.audit_only(t, *remember, &mut session)
                    }
                    None => UpdateOutcome::default(),
                };
                (plain_outcome(out), None)
            }
        };
        self.row.gossip_messages += gossip_messages;
        for m in &p2_seen {
            self.track_p2(m);
        }

        let server_party = PartyId::Server(server_id);
        tally(&mut self.row, &client_out.queries, false);
        if let Some(out) = &server_out {
            tally(&mut self.row, &out.queries, true);
        }

        let raised_any = client_out.raised.is_some() || server_out.as_ref().is_some_and(|o| o.raised.is_some());
        let has_consistency = client_out.queries.iter().chain(server_out.iter().flat_map(|o| o.queries.iter())).any(|q| {
            matches!(q, LogQuery::GetConsistencyProof { .. })
        });
        if has_consistency || raised_any {
            self.events.push(Event::Exchange {
                mmd: k,
                time_ms: now,
                client: client_id,
                server: server_id,
                client_queries: client_out.queries.clone(),
                server_queries: server_out.as_ref().map(|o| o.queries.clone()).unwrap_or_default(),
            });
        }

        self.handle_outcome(k, now, client_party, client_out);
        if let Some(out) = server_out {
            self.handle_outcome(k, now, server_party, out);
        }
    }

    fn handle_outcome(&mut self, k: u64, now: u64, party: PartyId, out: NodeOutcome) {
        if let Some(alert) = &out.raised {
            self.row.alerts_raised += 1;
            let (kind, reason) = match alert {
                AlertMessage::Warning(w) => (AlertKind::Warning, Some(format!("{:?}", w.reason))),
                AlertMessage::Inconsistency(_) => (AlertKind::Inconsistency, None),
            };
            if let Some(d) = self.detection.as_mut().filter(|d| d.attack_start_mmd.is_some()) {
                let slot = match kind {
                    AlertKind::Warning => &mut d.first_warning_mmd,
                    AlertKind::Inconsistency => &mut d.first_inconsistency_mmd,
                };
                slot.get_or_insert(k);
            }
            self.events.push(Event::Alert { mmd: k, time_ms: now, party, kind, reason });
        }
        for report in &out.reports {
            let before = self.monitor.log_status;
            let mut handle = self.log.handle(PartyId::Monitor);
            let mut session = Session::new(&mut handle, &self.verifier, self.node_config, PartyId::Monitor, now);
            let after = self.monitor.receive(report, &mut session);
            if after != before {
                self.events.push(Event::MonitorStatus { mmd: k, time_ms: now, status: after });
                if let Some(d) = self.detection.as_mut().filter(|d| d.attack_start_mmd.is_some()) {
                    d.confirmed_at_monitor_mmd.get_or_insert(k);
                }
            }
        }
    }

    fn snapshot(&mut self) {
        let latest = self.log.published(PartyId::Monitor).last().expect("published at every boundary");
        self.row.tree_size = latest.tree_size;
        for c in &self.clients {
            match c.best_sth() {
                None => self.row.sth_age_none += 1,
                Some(sth) => {
                    let age = (latest.timestamp.saturating_sub(sth.timestamp) / self.mmd_ms) as usize;
                    match self.row.sth_age.get_mut(age) {
                        Some(bucket) => *bucket += 1,
                        None => self.row.sth_age_older += 1,
                    }
                }
            }
        }
        self.row.map_entries = self.servers.iter().filter_map(|s| s.node.as_ref()).map(|n| n.state.stored_messages() as u64).sum();
        self.row.monitor_status = Some(self.monitor.log_status);
    }

    fn finish(mut self, rows: Vec<MetricsRow>) -> MetricsReport {
        let total = |f: fn(&MetricsRow) -> u64| rows.iter().map(f).sum::<u64>();
        let https = total(|r| r.https_connections);
        let client_q = total(|r| r.client_gossip_consistency_queries);
        let server_q = total(|r| r.server_gossip_consistency_queries);
        let n = rows.len().max(1) as f64;
        let mut mean_histogram = vec![0.0; HISTOGRAM_AGES + 2];
        for r in &rows {
            for (k, v) in r.sth_age.iter().enumerate() {
                mean_histogram[k] += *v as f64 / n;
            }
            mean_histogram[HISTOGRAM_AGES] += r.sth_age_older as f64 / n;
            mean_histogram[HISTOGRAM_AGES + 1] += r.sth_age_none as f64 / n;
        }
        if let Some(d) = self.detection.as_mut() {
            d.latency_mmds = super::report::compute_detection_latency(&self.events);
        }
        let summary = Summary {
            scenario: self.scenario.name.clone(),
            protocol: self.scenario.protocol.to_string(),
            seed: self.scenario.seed,
            simulated_clients: self.clients.len() as u32,
            mmds: rows.len() as u64,
            https_connections: https,
            ct_connections: total(|r| r.ct_connections),
            get_sth_queries: total(|r| r.get_sth_queries),
            client_gossip_consistency_queries: client_q,
            server_gossip_consistency_queries: server_q,
            gossip_messages: total(|r| r.gossip_messages),
            overhead: if https == 0 { 0.0 } else { (client_q + server_q) as f64 / https as f64 },
            mean_latest_fraction: rows.iter().map(|r| r.latest_fraction()).sum::<f64>() / n,
            mean_histogram,
            max_map_entries: rows.iter().map(|r| r.map_entries).max().unwrap_or(0),
            max_p2_message_bytes: self.max_p2_bytes,
            final_monitor_status: Some(self.monitor.log_status),
            detection: self.detection,
        };
        MetricsReport { rows, events: self.events, summary }
    }
}

fn plain_outcome(out: UpdateOutcome) -> NodeOutcome {
    NodeOutcome {
        queries: out.queries,
        reports: out.alert.iter().cloned().collect(),
        raised: out.alert,
        ..NodeOutcome::default()
    }
}

fn tally(row: &mut MetricsRow, queries: &[LogQuery], server: bool) {
    for q in queries {
        match q {
            LogQuery::GetSth => row.get_sth_queries += 1,
            LogQuery::GetAuditProof { .. } => row.audit_proof_queries += 1,
            LogQuery::GetConsistencyProof { purpose, .. } => match purpose {
                QueryPurpose::Gossip if server => row.server_gossip_consistency_queries += 1,
                QueryPurpose::Gossip => row.client_gossip_consistency_queries += 1,
                QueryPurpose::Audit => row.audit_consistency_queries += 1,
                QueryPurpose::Alert => row.alert_queries += 1,
            },
        }
    }
}

/// Whether the monitor has flagged the log.
pub fn detected(report: &MetricsReport) -> bool {
    report.summary.final_monitor_status.is_some_and(|s| s != LogStatus::Trusted)
}
