//! State machines for the two gossip protocols.
//!
//! Protocol 1 gossips a single tree head; Protocol 2 gossips a triplet
//! `(sth_a, sth_b, proof_ab)` so that receivers can often skip the log
//! entirely. Both share [`check_sths`] and [`valid_message`].

mod node;
mod p1;
mod p2;
mod session;

pub use node::{ClientNode, ClientState, NodeOutcome, ServerNode, ServerState};
pub use p1::{ClientStateP1, ServerStateP1};
pub use p2::{ClientStateP2, ServerStateP2, DEFAULT_STORAGE_LIMIT};
pub use session::{AuditResult, NodeConfig, Session};

use serde::{Deserialize, Serialize};

use crate::anomaly::AlertMessage;
use crate::log::{LogVerifier, SignedTreeHead};
use crate::merkle::{verify_consistency, ConsistencyProof};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "1")]
    SthOnly,
    #[serde(rename = "2")]
    SthAndProof,
}

impl Protocol {
    pub fn number(self) -> u8 {
        match self {
            Protocol::SthOnly => 1,
            Protocol::SthAndProof => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Protocol> {
        match n {
            1 => Some(Protocol::SthOnly),
            2 => Some(Protocol::SthAndProof),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GossipMessageP1 {
    pub sth: SignedTreeHead,
}

/// `(sth_a, sth_b, proof)` with `sth_a.tree_size < sth_b.tree_size`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GossipMessageP2 {
    pub sth_a: SignedTreeHead,
    pub sth_b: SignedTreeHead,
    pub proof: ConsistencyProof,
}

impl GossipMessageP2 {
    pub fn first_size(&self) -> u64 {
        self.sth_a.tree_size
    }

    pub fn second_size(&self) -> u64 {
        self.sth_b.tree_size
    }
}

/// Anything that can ride in a gossip slot.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Message {
    #[default]
    Empty,
    P1(GossipMessageP1),
    P2(GossipMessageP2),
    Alert(AlertMessage),
}

impl Message {
    pub fn is_empty(&self) -> bool {
        matches!(self, Message::Empty)
    }

    pub fn as_alert(&self) -> Option<&AlertMessage> {
        match self {
            Message::Alert(a) => Some(a),
            _ => None,
        }
    }
}

/// STHs that jointly violate one of the two consistency criteria.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InconsistencyEvidence {
    pub pairs: Vec<(SignedTreeHead, SignedTreeHead)>,
}

impl InconsistencyEvidence {
    /// All distinct STHs involved, in first-seen order.
    pub fn sths(&self) -> Vec<SignedTreeHead> {
        let mut out: Vec<SignedTreeHead> = Vec::new();
        for (x, y) in &self.pairs {
            for s in [x, y] {
                if !out.contains(s) {
                    out.push(s.clone());
                }
            }
        }
        out
    }
}

/// True when `x` and `y` violate a criterion: equal sizes with different
/// roots, or a later timestamp carrying a smaller tree.
pub fn sths_conflict(x: &SignedTreeHead, y: &SignedTreeHead) -> bool {
    if x.tree_size == y.tree_size && x.root_hash != y.root_hash {
        return true;
    }
    (x.timestamp > y.timestamp && x.tree_size < y.tree_size) || (y.timestamp > x.timestamp && y.tree_size < x.tree_size)
}

/// Pairwise consistency check over possibly-empty STH slots.
///
/// Signatures are the caller's responsibility. Fewer than two non-empty
/// STHs always pass.
pub fn check_sths<'a, I>(sths: I) -> Result<(), InconsistencyEvidence>
where
    I: IntoIterator<Item = Option<&'a SignedTreeHead>>,
{
    let present: Vec<&SignedTreeHead> = sths.into_iter().flatten().collect();
    let mut pairs = Vec::new();
    for (i, x) in present.iter().enumerate() {
        for y in &present[i + 1..] {
            if sths_conflict(x, y) && !pairs.iter().any(|(p, q): &(SignedTreeHead, SignedTreeHead)| (p == *x && q == *y) || (p == *y && q == *x)) {
                pairs.push(((*x).clone(), (*y).clone()));
            }
        }
    }
    if pairs.is_empty() {
        Ok(())
    } else {
        Err(InconsistencyEvidence { pairs })
    }
}

pub fn valid_p1(m: &GossipMessageP1, verifier: &LogVerifier) -> bool {
    verifier.verify_sth(&m.sth)
}

pub fn valid_p2(m: &GossipMessageP2, verifier: &LogVerifier) -> bool {
    m.sth_a.tree_size < m.sth_b.tree_size
        && verifier.verify_sth(&m.sth_a)
        && verifier.verify_sth(&m.sth_b)
        && verify_consistency(m.sth_a.tree_size, &m.sth_a.root_hash, m.sth_b.tree_size, &m.sth_b.root_hash, &m.proof)
}

/// Non-empty, of the protocol's format, and cryptographically valid.
pub fn valid_message(protocol: Protocol, m: &Message, verifier: &LogVerifier) -> bool {
    match (protocol, m) {
        (Protocol::SthOnly, Message::P1(m)) => valid_p1(m, verifier),
        (Protocol::SthAndProof, Message::P2(m)) => valid_p2(m, verifier),
        _ => false,
    }
}

/// Decodes and validates raw bytes.
pub fn valid_message_bytes(protocol: Protocol, raw: &[u8], verifier: &LogVerifier) -> bool {
    crate::wire::decode_message(raw).is_ok_and(|m| valid_message(protocol, &m, verifier))
}

/// Why a log query was issued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryPurpose {
    /// Triggered by a received gossip message; counts as protocol overhead.
    Gossip,
    /// Part of auditing an SCT; ordinary CT traffic.
    Audit,
    /// Re-checking an alert.
    Alert,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "query", rename_all = "snake_case")]
pub enum LogQuery {
    GetSth,
    GetConsistencyProof { first: u64, second: u64, purpose: QueryPurpose },
    GetAuditProof { tree_size: u64 },
}

impl LogQuery {
    pub fn consistency(first: u64, second: u64, purpose: QueryPurpose) -> LogQuery {
        LogQuery::GetConsistencyProof { first, second, purpose }
    }

    pub fn is_gossip_consistency(&self) -> bool {
        matches!(self, LogQuery::GetConsistencyProof { purpose: QueryPurpose::Gossip, .. })
    }
}

/// What one update procedure did.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UpdateOutcome {
    pub queries: Vec<LogQuery>,
    pub alert: Option<AlertMessage>,
}
