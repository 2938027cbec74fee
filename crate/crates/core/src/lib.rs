//! Gossip protocols for Certificate Transparency: Merkle log, log service,
//! client/server gossip state machines, anomaly handling and a simulator.

pub mod anomaly;
pub mod gossip;
pub mod log;
pub mod merkle;
pub mod wire;
pub mod sim;
