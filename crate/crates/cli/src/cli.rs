use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::api::LogInfoJson;
use crate::client::client_exchange;
use crate::http_log::{agent, HttpLog};
use crate::server::{self, GossipServer, GossipServerConfig, LogRoleConfig, MonitorConfig, MonitorServer};
use crate::vectors;
use ct_gossip_core::gossip::{ClientNode, Message, NodeConfig, Protocol, Session};
use ct_gossip_core::log::{LogVerifier, PartyId};
use ct_gossip_core::sim::{self, Scenario, SimProtocol};

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ct-gossip", version, about = "Gossip protocols for certificate transparency logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Role {
    Log,
    GossipServer,
    Monitor,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write metrics.csv, summary.json and events.jsonl.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the scenario's protocol (1, 2, none_save_scts, none_no_save).
        #[arg(long)]
        protocol: Option<SimProtocol>,
    },
    /// Run one of the demo servers.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, value_enum)]
        role: Role,
        #[arg(long)]
        config: PathBuf,
    },
    /// Gossip with a demo server over HTTP headers.
    Probe {
        #[arg(long)]
        url: String,
        #[arg(long, value_parser = ["1", "2"])]
        protocol: String,
        #[arg(long, default_value_t = 1)]
        rounds: u32,
        #[arg(long, default_value_t = 0)]
        client_id: u32,
        /// Log base URL; asked from the server when absent.
        #[arg(long)]
        log_url: Option<String>,
        /// Hex Ed25519 public key of the log; asked from the server when absent.
        #[arg(long)]
        log_key: Option<String>,
    },
    /// Print the golden proofs over the leaves C1..C6.
    Vectors {
        #[arg(long)]
        json: bool,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("CT_GOSSIP_LOG_LEVEL", "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate { scenario, seed, out, protocol } => simulate(&scenario, seed, &out, protocol),
        Command::Serve { port, role, config } => serve(port, role, &config),
        Command::Probe { url, protocol, rounds, client_id, log_url, log_key } => {
            probe(&url, &protocol, rounds, client_id, log_url, log_key)
        }
        Command::Vectors { json } => {
            let v = vectors::example_tree();
            if json {
                println!("{}", serde_json::to_string_pretty(&v).expect("vectors serialize"));
            } else {
                print!("{}", vectors::render_text(&v));
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn simulate(path: &Path, seed: Option<u64>, out: &Path, protocol: Option<SimProtocol>) -> Result<(), Failure> {
    let mut scenario = Scenario::load(path).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    if let Some(p) = protocol {
        scenario.protocol = p;
    }
    log::info!("running {} for {} MMDs", scenario.name, scenario.mmd_count());
    let report = sim::run(&scenario);
    report.write_to(out).map_err(|e| Failure::Runtime(format!("writing {}: {e}", out.display())))?;
    let s = &report.summary;
    println!(
        "protocol {} seed {}: {} HTTPS connections, overhead {:.6}, latest-STH fraction {:.4}, detection latency {}",
        s.protocol,
        s.seed,
        s.https_connections,
        s.overhead,
        s.mean_latest_fraction,
        s.detection.as_ref().and_then(|d| d.latency_mmds).map_or("none".to_string(), |l| format!("{l} MMDs")),
    );
    Ok(())
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn serve(port: u16, role: Role, config: &Path) -> Result<(), Failure> {
    let (router, log) = match role {
        Role::Log => {
            let cfg: LogRoleConfig = read_config(config)?;
            let log = server::new_log(&cfg);
            let auto = cfg.auto_advance.then(|| (log.clone(), cfg.log.mmd_ms));
            (server::log_router(log), auto)
        }
        Role::GossipServer => {
            let cfg: GossipServerConfig = read_config(config)?;
            let mut gs = GossipServer::new(&cfg).map_err(Failure::Config)?;
            gs.enroll().map_err(|e| Failure::Runtime(format!("cannot obtain an SCT from {}: {e}", cfg.log_url)))?;
            (server::gossip_router(Arc::new(Mutex::new(gs))), None)
        }
        Role::Monitor => {
            let cfg: MonitorConfig = read_config(config)?;
            let m = MonitorServer::new(&cfg).map_err(Failure::Config)?;
            (server::monitor_router(Arc::new(Mutex::new(m))), None)
        }
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
    rt.block_on(server::serve_forever(router, port, log)).map_err(|e| Failure::Runtime(e.to_string()))
}

fn probe(
    url: &str,
    protocol: &str,
    rounds: u32,
    client_id: u32,
    log_url: Option<String>,
    log_key: Option<String>,
) -> Result<(), Failure> {
    let protocol = Protocol::from_number(protocol.parse().unwrap_or(0)).ok_or(Failure::Config("protocol".into()))?;
    let agent = agent();
    let (log_url, log_key, mmd_ms) = match (log_url, log_key) {
        (Some(u), Some(k)) => (u, k, NodeConfig::default().mmd_ms),
        (u, k) => {
            let info_url = format!("{}/gossip/log", url.trim_end_matches('/'));
            let info: LogInfoJson = agent
                .get(&info_url)
                .call()
                .and_then(|mut r| r.body_mut().read_json())
                .map_err(|e| Failure::Runtime(format!("{info_url}: {e}")))?;
            (u.unwrap_or(info.log_url), k.unwrap_or(info.public_key), info.mmd_ms)
        }
    };
    let key: [u8; 32] = hex::decode(&log_key)
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| Failure::Config("log key must be 32 hex-encoded bytes".into()))?;
    let verifier = LogVerifier::new(key).map_err(|e| Failure::Config(e.to_string()))?;
    let party = PartyId::Client(client_id);
    let mut log = HttpLog::new(&log_url, party, verifier.log_id());
    let mut node = ClientNode::new(party, protocol, mmd_ms);
    let config = NodeConfig { mmd_ms, ..NodeConfig::default() };
    for round in 0..rounds {
        let mut session = Session::new(&mut log, &verifier, config, party, server::wall_ms());
        let ex = client_exchange(&agent, url, &mut node, &mut session).map_err(|e| Failure::Runtime(e.to_string()))?;
        let line = json!({
            "round": round,
            "sent": kind(&ex.sent),
            "received": kind(&ex.received),
            "sct": ex.sct.is_some(),
            "queries": ex.outcome.queries,
            "best_tree_size": node.state.best_sth().map(|s| s.tree_size),
            "alert": node.alert().map(|a| if a.is_inconsistency() { "inconsistency" } else { "warning" }),
        });
        println!("{line}");
    }
    Ok(())
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
