//! HTTP transport, demo servers and command line for ct-gossip.

pub mod api;
pub mod cli;
pub mod client;
pub mod http_log;
pub mod server;
pub mod vectors;
