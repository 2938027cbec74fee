//! Client side of the header transport.

use thiserror::Error;
use ureq::Agent;

use ct_gossip_core::gossip::{ClientNode, Message, NodeOutcome, Session};
use ct_gossip_core::log::SignedCertificateTimestamp;
use ct_gossip_core::wire::{self, GOSSIP_HEADER, SCT_HEADER};

#[derive(Debug, Error)]
pub enum ExchangeError {
    #[error("request to {url} failed: {reason}")]
    Transport { url: String, reason: String },
}

/// What one HTTPS exchange carried and what the client did with it.
#[derive(Debug, Clone)]
pub struct Exchange {
    pub sent: Message,
    pub received: Message,
    pub sct: Option<SignedCertificateTimestamp>,
    pub outcome: NodeOutcome,
}

/// Sends a request carrying the client's gossip header, then runs the
/// client update on the reply. A transport failure leaves `node`
/// untouched; a missing or malformed reply header counts as an empty
/// message.
pub fn client_exchange(
    agent: &Agent,
    url: &str,
    node: &mut ClientNode,
    session: &mut Session<'_>,
) -> Result<Exchange, ExchangeError> {
    let sent = node.get_message();
    let mut request = agent.get(url);
    if let Some(value) = wire::encode_header(&sent) {
        request = request.header(GOSSIP_HEADER, value);
    }
    let resp = request.call().map_err(|e| ExchangeError::Transport { url: url.to_string(), reason: e.to_string() })?;
    if !resp.status().is_success() {
        return Err(ExchangeError::Transport { url: url.to_string(), reason: format!("HTTP {}", resp.status()) });
    }
    let header = |name: &str| resp.headers().get(name).and_then(|v| v.to_str().ok()).map(str::to_string);
    let received = wire::decode_header(header(GOSSIP_HEADER).as_deref()).unwrap_or(Message::Empty);
    let sct = header(SCT_HEADER).and_then(|v| wire::decode_sct_header(&v).ok());
    let outcome = node.update(sct.as_ref(), &received, session);
    Ok(Exchange { sent, received, sct, outcome })
}
