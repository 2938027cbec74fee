//! Deterministic traffic simulation of gossiping clients and servers.
//!
//! Only gossiping clients (`f` times the population) are simulated; the
//! remaining clients never talk to gossiping nodes and do not affect the
//! metrics. The log starts one MMD before the simulation with every
//! CT-enabled server's certificate.

mod engine;
mod report;
mod scenario;
mod traffic;

pub use engine::{detected, run};
pub use report::{
    compute_detection_latency, parse_events, AlertKind, Detection, Event, MetricsReport, MetricsRow, Summary,
    HISTOGRAM_AGES,
};
pub use scenario::{
    AttackKind, AttackSpec, CountryModel, DomainWeight, NbParams, Scenario, ScenarioError, ServerModel, SimProtocol,
    DAY_MS, HOUR_MS,
};
pub use traffic::{pick_domain, sample_connection_count, ConnectionSampler, DomainPicker};
