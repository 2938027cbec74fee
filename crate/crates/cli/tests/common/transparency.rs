//! The same split-world script run twice: once with direct calls into the
//! core state machines, once through the demo servers over HTTP headers.
//! Both runs must end in the same states.

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use ct_gossip_cli::client::client_exchange;
use ct_gossip_cli::http_log::{agent, HttpLog};
use ct_gossip_cli::server::{
    self, GossipServer, GossipServerConfig, LogRoleConfig, MonitorConfig, MonitorServer, RunningServer,
};
use ct_gossip_core::anomaly::{AlertMessage, LogStatus, MonitorState};
use ct_gossip_core::gossip::{
    ClientNode, ClientState, LogQuery, Message, NodeConfig, Protocol, ServerNode, ServerState, Session,
    DEFAULT_STORAGE_LIMIT,
};
use ct_gossip_core::log::{LogBehaviorPolicy, LogConfig, LogService, PartyId, SignedCertificateTimestamp};

const MMD: u64 = 60 * 60 * 1000;
const VICTIM: usize = 0;
const BYSTANDER: usize = 1;
const SITE_A: usize = 0;
const SITE_B: usize = 1;
const IMPOSTOR: usize = 2;

fn client_ids() -> [PartyId; 2] {
    [PartyId::Client(0), PartyId::Client(1)]
}

fn server_ids() -> [PartyId; 3] {
    [PartyId::Server(1), PartyId::Server(2), PartyId::Server(66)]
}

const CERTS: [&str; 2] = ["site-a", "site-b"];

fn node_config() -> NodeConfig {
    NodeConfig { mmd_ms: MMD, ..NodeConfig::default() }
}

fn kind(m: &Message) -> &'static str {
    match m {
        Message::Empty => "empty",
        Message::P1(_) => "p1",
        Message::P2(_) => "p2",
        Message::Alert(a) if a.is_inconsistency() => "inconsistency",
        Message::Alert(_) => "warning",
    }
}

/// Warnings carry wall-clock times; everything else is compared verbatim.
fn alert_view(a: Option<&AlertMessage>) -> Option<String> {
    a.map(|a| match a {
        AlertMessage::Inconsistency(m) => format!("{m:?}"),
        AlertMessage::Warning(w) => format!("warning {:?} {:?}", w.reason, w.evidence),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub client: usize,
    pub server: usize,
    pub sent: &'static str,
    pub received: &'static str,
    pub client_queries: Vec<LogQuery>,
    pub client_state: ClientState,
    pub server_state: ServerState,
    pub client_alert: Option<String>,
    pub server_alert: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub records: Vec<Record>,
    pub monitor: LogStatus,
    pub monitor_reports: usize,
}

trait World {
    fn submit(&mut self, cert: &str);
    fn attack(&mut self, cert: &str) -> SignedCertificateTimestamp;
    fn advance(&mut self);
    fn set_policy(&mut self, policy: LogBehaviorPolicy);
    fn enroll(&mut self, server: usize);
    fn give_sct(&mut self, server: usize, sct: SignedCertificateTimestamp);
    fn exchange(&mut self, client: usize, server: usize) -> Record;
    fn monitor(&self) -> (LogStatus, usize);
}

fn log_config() -> LogConfig {
    LogConfig { key_seed: [9; 32], mmd_ms: MMD, start_ms: server::wall_ms() - MMD }
}

// ------------------------------------------------------------------ direct

struct Direct {
    log: LogService,
    clients: Vec<ClientNode>,
    servers: Vec<(ServerNode, Option<SignedCertificateTimestamp>)>,
    monitor: MonitorState,
}

impl Direct {
    fn new(protocol: Protocol, config: &LogConfig) -> Direct {
        Direct {
            log: LogService::new(config),
            clients: client_ids().iter().map(|&id| ClientNode::new(id, protocol, MMD)).collect(),
            servers: server_ids()
                .iter()
                .map(|&id| (ServerNode::new(id, protocol, DEFAULT_STORAGE_LIMIT, MMD), None))
                .collect(),
            monitor: MonitorState::new(MMD),
        }
    }

    fn report(&mut self, alerts: &[AlertMessage], now: u64) {
        for alert in alerts {
            let mut handle = self.log.handle(PartyId::Monitor);
            let mut s = Session::new(&mut handle, self.log.verifier(), node_config(), PartyId::Monitor, now);
            self.monitor.receive(alert, &mut s);
        }
    }
}

impl World for Direct {
    fn submit(&mut self, cert: &str) {
        self.log.submit(cert.as_bytes()).expect("honest submission");
    }

    fn attack(&mut self, cert: &str) -> SignedCertificateTimestamp {
        self.log.submit_attack(cert.as_bytes())
    }

    fn advance(&mut self) {
        self.log.advance_mmd().expect("non-empty tree");
    }

    fn set_policy(&mut self, policy: LogBehaviorPolicy) {
        self.log.configure(policy);
    }

    fn enroll(&mut self, server: usize) {
        let sct = self.log.submit(CERTS[server].as_bytes()).expect("honest submission");
        self.servers[server].1 = Some(sct);
    }

    fn give_sct(&mut self, server: usize, sct: SignedCertificateTimestamp) {
        self.servers[server].1 = Some(sct);
    }

    fn exchange(&mut self, client: usize, server: usize) -> Record {
        let now = server::wall_ms();
        let m1 = self.clients[client].get_message();
        let (node, sct) = &mut self.servers[server];
        let m2 = node.get_message(&m1, self.log.verifier());
        let server_out = {
            let mut handle = self.log.handle(node.id);
            let mut s = Session::new(&mut handle, self.log.verifier(), node_config(), node.id, now);
            node.update(&m1, &mut s)
        };
        let sct = sct.clone();
        self.report(&server_out.reports, now);

        let c = &mut self.clients[client];
        let client_out = {
            let mut handle = self.log.handle(c.id);
            let mut s = Session::new(&mut handle, self.log.verifier(), node_config(), c.id, now);
            c.update(sct.as_ref(), &m2, &mut s)
        };
        self.report(&client_out.reports, now);

        let c = &self.clients[client];
        let node = &self.servers[server].0;
        Record {
            client,
            server,
            sent: kind(&m1),
            received: kind(&m2),
            client_queries: client_out.queries,
            client_state: c.state.clone(),
            server_state: node.state.clone(),
            client_alert: alert_view(c.alert()),
            server_alert: alert_view(node.alert()),
        }
    }

    fn monitor(&self) -> (LogStatus, usize) {
        (self.monitor.log_status, self.monitor.received_reports.len())
    }
}

// -------------------------------------------------------------------- http

struct Http {
    log: HttpLog,
    monitor_url: String,
    monitor: Arc<Mutex<MonitorServer>>,
    servers: Vec<(Arc<Mutex<GossipServer>>, String)>,
    clients: Vec<(ClientNode, HttpLog)>,
    verifier: ct_gossip_core::log::LogVerifier,
    // kept last so the servers stop after everything else is dropped
    _running: Vec<RunningServer>,
}

impl Http {
    fn new(protocol: Protocol, config: &LogConfig) -> Http {
        let shared = server::new_log(&LogRoleConfig {
            log: config.clone(),
            auto_advance: false,
            policy: LogBehaviorPolicy::Honest,
        });
        let verifier = shared.lock().unwrap().verifier().clone();
        let public_key = hex::encode(verifier.public_key());
        let mut running = vec![server::spawn(server::log_router(shared), 0).expect("log server")];
        let log_url = running[0].url();

        let monitor = Arc::new(Mutex::new(
            MonitorServer::new(&MonitorConfig { log_url: log_url.clone(), log_public_key: public_key.clone(), mmd_ms: MMD })
                .expect("monitor config"),
        ));
        running.push(server::spawn(server::monitor_router(monitor.clone()), 0).expect("monitor server"));
        let monitor_url = running[1].url();

        let mut servers = Vec::new();
        for (i, id) in server_ids().into_iter().enumerate() {
            let PartyId::Server(n) = id else { unreachable!() };
            let gs = GossipServer::new(&GossipServerConfig {
                id: n,
                protocol,
                log_url: log_url.clone(),
                log_public_key: public_key.clone(),
                cert: CERTS.get(i).unwrap_or(&"unused").to_string(),
                storage_limit: DEFAULT_STORAGE_LIMIT,
                mmd_ms: MMD,
                retry_limit: node_config().retry_limit,
                consent: false,
                monitor_url: Some(monitor_url.clone()),
            })
            .expect("server config");
            let gs = Arc::new(Mutex::new(gs));
            let r = server::spawn(server::gossip_router(gs.clone()), 0).expect("gossip server");
            servers.push((gs, r.url()));
            running.push(r);
        }
        let clients = client_ids()
            .into_iter()
            .map(|id| (ClientNode::new(id, protocol, MMD), HttpLog::new(&log_url, id, verifier.log_id())))
            .collect();
        Http {
            log: HttpLog::new(&log_url, PartyId::Anonymous, verifier.log_id()),
            monitor_url,
            monitor,
            servers,
            clients,
            verifier,
            _running: running,
        }
    }
}

impl World for Http {
    fn submit(&mut self, cert: &str) {
        self.log.add_chain(cert.as_bytes()).expect("add-chain");
    }

    fn attack(&mut self, cert: &str) -> SignedCertificateTimestamp {
        self.log.add_attack_chain(cert.as_bytes()).expect("attack submission")
    }

    fn advance(&mut self) {
        self.log.advance().expect("advance");
    }

    fn set_policy(&mut self, policy: LogBehaviorPolicy) {
        self.log.set_policy(&policy).expect("policy");
    }

    fn enroll(&mut self, server: usize) {
        self.servers[server].0.lock().unwrap().enroll().expect("enroll");
    }

    fn give_sct(&mut self, server: usize, sct: SignedCertificateTimestamp) {
        self.servers[server].0.lock().unwrap().sct = Some(sct);
    }

    fn exchange(&mut self, client: usize, server: usize) -> Record {
        let (node, log) = &mut self.clients[client];
        let party = node.id;
        let mut s = Session::new(log, &self.verifier, node_config(), party, server::wall_ms());
        let ex = client_exchange(&agent(), &self.servers[server].1, node, &mut s).expect("exchange");
        for alert in &ex.outcome.reports {
            server::send_report(&self.monitor_url, alert).expect("monitor report");
        }
        let gs = self.servers[server].0.lock().unwrap();
        Record {
            client,
            server,
            sent: kind(&ex.sent),
            received: kind(&ex.received),
            client_queries: ex.outcome.queries,
            client_state: node.state.clone(),
            server_state: gs.node.state.clone(),
            client_alert: alert_view(node.alert()),
            server_alert: alert_view(gs.node.alert()),
        }
    }

    fn monitor(&self) -> (LogStatus, usize) {
        let m = self.monitor.lock().unwrap();
        (m.state.log_status, m.state.received_reports.len())
    }
}

// ------------------------------------------------------------------ script

fn script(w: &mut dyn World) -> Snapshot {
    let mut records = Vec::new();
    w.enroll(SITE_A);
    w.submit("bg-0");
    w.advance();
    records.push(w.exchange(VICTIM, SITE_A));
    records.push(w.exchange(BYSTANDER, SITE_A));
    w.submit("bg-1");
    w.advance();
    records.push(w.exchange(BYSTANDER, SITE_A));
    records.push(w.exchange(VICTIM, SITE_A));

    // the log turns on the victim
    w.set_policy(LogBehaviorPolicy::SplitWorld { victims: BTreeSet::from([client_ids()[VICTIM]]) });
    let forged = w.attack("attack-cert");
    w.give_sct(IMPOSTOR, forged);
    w.submit("bg-2");
    w.advance();
    w.enroll(SITE_B);
    w.advance();

    records.push(w.exchange(VICTIM, IMPOSTOR));
    records.push(w.exchange(BYSTANDER, SITE_B));
    records.push(w.exchange(BYSTANDER, SITE_A));
    records.push(w.exchange(VICTIM, SITE_A));
    records.push(w.exchange(VICTIM, SITE_A));
    records.push(w.exchange(BYSTANDER, SITE_A));
    let (monitor, monitor_reports) = w.monitor();
    Snapshot { records, monitor, monitor_reports }
}

pub fn direct_run(protocol: Protocol, config: &LogConfig) -> Snapshot {
    script(&mut Direct::new(protocol, config))
}

pub fn http_run(protocol: Protocol, config: &LogConfig) -> Snapshot {
    script(&mut Http::new(protocol, config))
}

/// Runs the script both ways and checks that the runs agree and that the
/// attack surfaced: alerts at the site, the victim and the bystander, the
/// alert substituted for gossip, and an untrusted verdict at the monitor.
pub fn check(protocol: Protocol) -> Result<String, String> {
    let config = log_config();
    let direct = direct_run(protocol, &config);
    let http = http_run(protocol, &config);
    for (i, (d, h)) in direct.records.iter().zip(&http.records).enumerate() {
        if d != h {
            return Err(format!("exchange {i} differs:\n direct {d:?}\n http   {h:?}"));
        }
    }
    if direct != http {
        return Err(format!(
            "monitor differs: direct {:?}/{} http {:?}/{}",
            direct.monitor, direct.monitor_reports, http.monitor, http.monitor_reports
        ));
    }
    let last = direct.records.last().expect("non-empty script");
    let incon = |a: &Option<String>| a.as_deref().is_some_and(|s| !s.starts_with("warning"));
    if !incon(&direct.records[7].client_alert) || !incon(&direct.records[7].server_alert) {
        return Err(format!("no inconsistency after the victim met site A: {:?}", direct.records[7]));
    }
    if direct.records[8].received != "inconsistency" {
        return Err(format!("site A did not substitute its alert: {:?}", direct.records[8].received));
    }
    if !incon(&last.client_alert) {
        return Err("the bystander did not take up the alert".into());
    }
    if direct.monitor != LogStatus::Untrusted {
        return Err(format!("monitor ended {:?}", direct.monitor));
    }
    Ok(format!("{} exchanges agree, monitor {:?} after {} reports", direct.records.len(), direct.monitor, direct.monitor_reports))
}
