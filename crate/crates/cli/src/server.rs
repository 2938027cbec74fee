//! Demo HTTP servers: the log, a gossiping web server and the monitor.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::{Query, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use crate::api::{
    self, AddChainJson, ConsistencyJson, LogInfoJson, ProofByHashJson, SctJson, StatusJson, SthJson, PARTY_HEADER,
};
use crate::http_log::{agent, HttpLog};
use ct_gossip_core::anomaly::{AlertMessage, LogStatus, MonitorState};
use ct_gossip_core::gossip::{Message, NodeConfig, NodeOutcome, Protocol, ServerNode, Session, DEFAULT_STORAGE_LIMIT};
use ct_gossip_core::log::{
    LogBehaviorPolicy, LogConfig, LogError, LogService, LogVerifier, PartyId, SignedCertificateTimestamp,
    DEFAULT_MMD_MS,
};
use ct_gossip_core::merkle::leaf_hash;
use ct_gossip_core::wire::{self, GOSSIP_HEADER, SCT_HEADER};

pub fn wall_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn default_mmd() -> u64 {
    DEFAULT_MMD_MS
}

fn default_storage() -> usize {
    DEFAULT_STORAGE_LIMIT
}

fn default_retries() -> u32 {
    3
}

fn verifier_from_hex(public_key: &str) -> Result<LogVerifier, String> {
    let bytes = hex::decode(public_key).map_err(|e| format!("log public key: {e}"))?;
    let key: [u8; 32] = bytes.try_into().map_err(|_| "log public key must be 32 bytes".to_string())?;
    LogVerifier::new(key).map_err(|e| format!("log public key: {e}"))
}

// ---------------------------------------------------------------- log role

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRoleConfig {
    #[serde(flatten)]
    pub log: LogConfig,
    /// Publish a tree head every MMD of wall-clock time.
    #[serde(default)]
    pub auto_advance: bool,
    #[serde(default)]
    pub policy: LogBehaviorPolicy,
}

pub type SharedLog = Arc<Mutex<LogService>>;

fn party(headers: &HeaderMap) -> PartyId {
    headers
        .get(PARTY_HEADER)
        .and_then(|v| v.to_str().ok())
        .and_then(|s| s.parse().ok())
        .unwrap_or(PartyId::Anonymous)
}

fn log_error(e: LogError) -> Response {
    let status = match e {
        LogError::Timeout => StatusCode::SERVICE_UNAVAILABLE,
        LogError::NotFound | LogError::NoTreeHead => StatusCode::NOT_FOUND,
        LogError::Range(_) => StatusCode::BAD_REQUEST,
        LogError::Transport(_) => StatusCode::BAD_GATEWAY,
    };
    (status, e.to_string()).into_response()
}

#[derive(Deserialize)]
struct ConsistencyParams {
    first: u64,
    second: u64,
}

#[derive(Deserialize)]
struct ProofParams {
    hash: String,
    tree_size: u64,
}

async fn get_sth(State(log): State<SharedLog>, headers: HeaderMap) -> Response {
    let log = log.lock().expect("log lock");
    match log.get_sth(party(&headers)) {
        Ok(sth) => Json(SthJson::from_sth(&sth)).into_response(),
        Err(e) => log_error(e),
    }
}

async fn get_consistency(
    State(log): State<SharedLog>,
    headers: HeaderMap,
    Query(q): Query<ConsistencyParams>,
) -> Response {
    let log = log.lock().expect("log lock");
    match log.get_consistency_proof(party(&headers), q.first, q.second) {
        Ok(p) => Json(ConsistencyJson { consistency: p.path.iter().map(|d| api::b64(&d.0)).collect() }).into_response(),
        Err(e) => log_error(e),
    }
}

async fn get_proof_by_hash(State(log): State<SharedLog>, headers: HeaderMap, Query(q): Query<ProofParams>) -> Response {
    let Ok(hash) = api::digest_from_b64(&q.hash) else {
        return (StatusCode::BAD_REQUEST, "bad hash").into_response();
    };
    let log = log.lock().expect("log lock");
    match log.get_proof_by_hash(party(&headers), &hash, q.tree_size) {
        Ok(p) => Json(ProofByHashJson { leaf_index: p.leaf_index, audit_path: p.path.iter().map(|d| api::b64(&d.0)).collect() })
            .into_response(),
        Err(e) => log_error(e),
    }
}

fn first_cert(body: &AddChainJson) -> Result<Vec<u8>, Response> {
    body.chain
        .first()
        .and_then(|c| api::unb64(c).ok())
        .ok_or_else(|| (StatusCode::BAD_REQUEST, "chain needs one base64 certificate").into_response())
}

async fn add_chain(State(log): State<SharedLog>, Json(body): Json<AddChainJson>) -> Response {
    let cert = match first_cert(&body) {
        Ok(c) => c,
        Err(r) => return r,
    };
    let mut log = log.lock().expect("log lock");
    match log.submit(&cert) {
        Ok(sct) => Json(SctJson::from_sct(&sct)).into_response(),
        Err(e) => log_error(e),
    }
}

async fn admin_attack(State(log): State<SharedLog>, Json(body): Json<AddChainJson>) -> Response {
    let cert = match first_cert(&body) {
        Ok(c) => c,
        Err(r) => return r,
    };
    let sct = log.lock().expect("log lock").submit_attack(&cert);
    Json(SctJson::from_sct(&sct)).into_response()
}

async fn admin_advance(State(log): State<SharedLog>) -> Response {
    match log.lock().expect("log lock").advance_mmd() {
        Ok(sth) => Json(SthJson::from_sth(&sth)).into_response(),
        Err(e) => log_error(e),
    }
}

async fn admin_policy(State(log): State<SharedLog>, Json(policy): Json<LogBehaviorPolicy>) -> StatusCode {
    log::info!("log policy set to {policy:?}");
    log.lock().expect("log lock").configure(policy);
    StatusCode::NO_CONTENT
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogAdminInfo {
    pub log_id: String,
    pub public_key: String,
    pub mmd_ms: u64,
    pub tree_size: u64,
}

async fn admin_info(State(log): State<SharedLog>) -> Json<LogAdminInfo> {
    let log = log.lock().expect("log lock");
    Json(LogAdminInfo {
        log_id: log.key().log_id().to_hex(),
        public_key: hex::encode(log.key().public_key()),
        mmd_ms: log.clock().mmd_ms,
        tree_size: log.tree_size(PartyId::Monitor),
    })
}

pub fn log_router(log: SharedLog) -> Router {
    Router::new()
        .route("/ct/v1/get-sth", get(get_sth))
        .route("/ct/v1/get-sth-consistency", get(get_consistency))
        .route("/ct/v1/get-proof-by-hash", get(get_proof_by_hash))
        .route("/ct/v1/add-chain", post(add_chain))
        .route("/admin/advance", post(admin_advance))
        .route("/admin/policy", put(admin_policy))
        .route("/admin/attack", post(admin_attack))
        .route("/admin/info", get(admin_info))
        .with_state(log)
}

pub fn new_log(config: &LogRoleConfig) -> SharedLog {
    let mut log_config = config.log.clone();
    if log_config.start_ms == 0 {
        // first tree head lands on the current wall-clock time
        log_config.start_ms = wall_ms().saturating_sub(log_config.mmd_ms);
    }
    let mut log = LogService::new(&log_config);
    log.configure(config.policy.clone());
    Arc::new(Mutex::new(log))
}

/// Advances `log` once per MMD of wall-clock time.
async fn auto_advance(log: SharedLog, mmd_ms: u64) {
    let mut tick = tokio::time::interval(Duration::from_millis(mmd_ms.max(1)));
    loop {
        tick.tick().await;
        if let Ok(sth) = log.lock().expect("log lock").advance_mmd() {
            log::info!("published tree head size {} at {}", sth.tree_size, sth.timestamp);
        }
    }
}

// ----------------------------------------------------- gossip server role

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GossipServerConfig {
    pub id: u32,
    pub protocol: Protocol,
    pub log_url: String,
    pub log_public_key: String,
    /// Certificate bytes submitted to the log at start-up.
    pub cert: String,
    #[serde(default = "default_storage")]
    pub storage_limit: usize,
    #[serde(default = "default_mmd")]
    pub mmd_ms: u64,
    #[serde(default = "default_retries")]
    pub retry_limit: u32,
    #[serde(default)]
    pub consent: bool,
    #[serde(default)]
    pub monitor_url: Option<String>,
}

pub struct GossipServer {
    pub node: ServerNode,
    pub sct: Option<SignedCertificateTimestamp>,
    pub log: HttpLog,
    pub verifier: LogVerifier,
    pub node_config: NodeConfig,
    pub monitor_url: Option<String>,
    pub info: LogInfoJson,
    cert: Vec<u8>,
}

impl GossipServer {
    pub fn new(config: &GossipServerConfig) -> Result<GossipServer, String> {
        let verifier = verifier_from_hex(&config.log_public_key)?;
        let id = PartyId::Server(config.id);
        Ok(GossipServer {
            node: ServerNode::new(id, config.protocol, config.storage_limit, config.mmd_ms),
            sct: None,
            log: HttpLog::new(&config.log_url, id, verifier.log_id()),
            node_config: NodeConfig { mmd_ms: config.mmd_ms, retry_limit: config.retry_limit, consent: config.consent },
            verifier,
            monitor_url: config.monitor_url.clone(),
            info: LogInfoJson {
                log_url: config.log_url.clone(),
                public_key: config.log_public_key.clone(),
                mmd_ms: config.mmd_ms,
            },
            cert: config.cert.as_bytes().to_vec(),
        })
    }

    /// Obtains an SCT for the server's certificate.
    pub fn enroll(&mut self) -> Result<(), LogError> {
        let sct = self.log.add_chain(&self.cert)?;
        debug_assert_eq!(sct.cert_digest, leaf_hash(&self.cert));
        self.sct = Some(sct);
        Ok(())
    }

    /// One request: the response is selected first, then the state update
    /// runs.
    pub fn handle(&mut self, m1: &Message, now_ms: u64) -> (Message, NodeOutcome) {
        let m2 = self.node.get_message(m1, &self.verifier);
        let party = self.node.id;
        let mut session = Session::new(&mut self.log, &self.verifier, self.node_config, party, now_ms);
        let outcome = self.node.update(m1, &mut session);
        if let Some(url) = &self.monitor_url {
            for report in &outcome.reports {
                if let Err(e) = send_report(url, report) {
                    log::warn!("could not reach monitor: {e}");
                }
            }
        }
        (m2, outcome)
    }
}

/// Posts an alert to a monitor; returns the status it reports.
pub fn send_report(monitor_url: &str, report: &AlertMessage) -> Result<StatusJson, String> {
    let body = wire::encode_header(&Message::Alert(report.clone())).expect("alerts are never empty");
    let url = format!("{}/monitor/v1/report", monitor_url.trim_end_matches('/'));
    let mut resp = agent().post(&url).send(body).map_err(|e| e.to_string())?;
    if resp.status().as_u16() != 200 {
        return Err(format!("HTTP {} from {url}", resp.status()));
    }
    resp.body_mut().read_json().map_err(|e| e.to_string())
}

pub type SharedGossipServer = Arc<Mutex<GossipServer>>;

async fn page(State(server): State<SharedGossipServer>, headers: HeaderMap) -> Response {
    let m1 = wire::decode_header(headers.get(GOSSIP_HEADER).and_then(|v| v.to_str().ok())).unwrap_or_else(|e| {
        log::debug!("malformed gossip header: {e}");
        Message::Empty
    });
    let now = wall_ms();
    let worker = tokio::task::spawn_blocking(move || {
        let mut s = server.lock().expect("server lock");
        let (m2, _) = s.handle(&m1, now);
        (m2, s.sct.clone())
    });
    let Ok((m2, sct)) = worker.await else {
        return StatusCode::INTERNAL_SERVER_ERROR.into_response();
    };
    let mut resp = "<!doctype html><title>ct-gossip</title><p>hello</p>\n".into_response();
    if let Some(value) = wire::encode_header(&m2).and_then(|v| HeaderValue::from_str(&v).ok()) {
        resp.headers_mut().insert(GOSSIP_HEADER, value);
    }
    if let Some(value) = sct.and_then(|t| HeaderValue::from_str(&wire::encode_sct_header(&t)).ok()) {
        resp.headers_mut().insert(SCT_HEADER, value);
    }
    resp
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GossipStateJson {
    pub id: PartyId,
    pub protocol: Protocol,
    pub best_tree_size: Option<u64>,
    pub stored_messages: usize,
    pub alert: Option<String>,
}

async fn gossip_state(State(server): State<SharedGossipServer>) -> Json<GossipStateJson> {
    let s = server.lock().expect("server lock");
    Json(GossipStateJson {
        id: s.node.id,
        protocol: s.node.state.protocol(),
        best_tree_size: s.node.state.best_sth().map(|t| t.tree_size),
        stored_messages: s.node.state.stored_messages(),
        alert: s.node.alert().map(|a| if a.is_inconsistency() { "inconsistency".into() } else { "warning".into() }),
    })
}

async fn gossip_log(State(server): State<SharedGossipServer>) -> Json<LogInfoJson> {
    Json(server.lock().expect("server lock").info.clone())
}

pub fn gossip_router(server: SharedGossipServer) -> Router {
    Router::new()
        .route("/gossip/state", get(gossip_state))
        .route("/gossip/log", get(gossip_log))
        .fallback(page)
        .with_state(server)
}

// ------------------------------------------------------------ monitor role

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub log_url: String,
    pub log_public_key: String,
    #[serde(default = "default_mmd")]
    pub mmd_ms: u64,
}

pub struct MonitorServer {
    pub state: MonitorState,
    log: HttpLog,
    verifier: LogVerifier,
    node_config: NodeConfig,
}

impl MonitorServer {
    pub fn new(config: &MonitorConfig) -> Result<MonitorServer, String> {
        let verifier = verifier_from_hex(&config.log_public_key)?;
        Ok(MonitorServer {
            state: MonitorState::new(config.mmd_ms),
            log: HttpLog::new(&config.log_url, PartyId::Monitor, verifier.log_id()),
            verifier,
            node_config: NodeConfig { mmd_ms: config.mmd_ms, ..NodeConfig::default() },
        })
    }

    pub fn receive(&mut self, report: &AlertMessage, now_ms: u64) -> LogStatus {
        let mut session = Session::new(&mut self.log, &self.verifier, self.node_config, PartyId::Monitor, now_ms);
        let before = self.state.log_status;
        let after = self.state.receive(report, &mut session);
        if after != before {
            log::warn!("log status changed from {before:?} to {after:?}");
        }
        after
    }

    fn status(&self) -> StatusJson {
        StatusJson {
            status: self.state.log_status,
            reports: self.state.received_reports.len(),
            duplicates: self.state.duplicates,
        }
    }
}

pub type SharedMonitor = Arc<Mutex<MonitorServer>>;

async fn monitor_report(State(monitor): State<SharedMonitor>, body: String) -> Response {
    let report = match wire::decode_header(Some(&body)) {
        Ok(Message::Alert(a)) => a,
        _ => return (StatusCode::BAD_REQUEST, "body must be a base64 alert message").into_response(),
    };
    let now = wall_ms();
    let worker = tokio::task::spawn_blocking(move || {
        let mut m = monitor.lock().expect("monitor lock");
        m.receive(&report, now);
        m.status()
    });
    match worker.await {
        Ok(status) => Json(status).into_response(),
        Err(_) => StatusCode::INTERNAL_SERVER_ERROR.into_response(),
    }
}

async fn monitor_status(State(monitor): State<SharedMonitor>) -> Json<StatusJson> {
    Json(monitor.lock().expect("monitor lock").status())
}

pub fn monitor_router(monitor: SharedMonitor) -> Router {
    Router::new()
        .route("/monitor/v1/report", post(monitor_report))
        .route("/monitor/v1/status", get(monitor_status))
        .with_state(monitor)
}

// ---------------------------------------------------------------- running

/// A server on a background thread; stops when dropped.
pub struct RunningServer {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Serves `router` on 127.0.0.1:`port` (0 picks a free port).
pub fn spawn(router: Router, port: u16) -> std::io::Result<RunningServer> {
    let listener = std::net::TcpListener::bind(("127.0.0.1", port))?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().expect("runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
            let shutdown = async {
                let _ = rx.await;
            };
            if let Err(e) = axum::serve(listener, router).with_graceful_shutdown(shutdown).await {
                log::error!("server failed: {e}");
            }
        });
    });
    Ok(RunningServer { addr, shutdown: Some(tx), thread: Some(thread) })
}

/// Runs `router` on 0.0.0.0:`port` until interrupted.
pub async fn serve_forever(router: Router, port: u16, log: Option<(SharedLog, u64)>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    if let Some((log, mmd)) = log {
        tokio::spawn(auto_advance(log, mmd));
    }
    axum::serve(listener, router)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
