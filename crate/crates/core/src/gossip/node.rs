//! Protocol-agnostic client and server nodes with alert handling layered on
//! top of the protocol state machines.

use super::{ClientStateP1, ClientStateP2, LogQuery, Message, Protocol, ServerStateP1, ServerStateP2, Session, UpdateOutcome};
use crate::anomaly::{handle_alert, AlertAction, AlertMessage, AlertMode, ConfirmationCache};
use crate::log::{LogVerifier, PartyId, SignedCertificateTimestamp, SignedTreeHead};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientState {
    P1(ClientStateP1),
    P2(ClientStateP2),
}

impl ClientState {
    pub fn new(protocol: Protocol) -> ClientState {
        match protocol {
            Protocol::SthOnly => ClientState::P1(ClientStateP1::default()),
            Protocol::SthAndProof => ClientState::P2(ClientStateP2::default()),
        }
    }

    pub fn protocol(&self) -> Protocol {
        match self {
            ClientState::P1(_) => Protocol::SthOnly,
            ClientState::P2(_) => Protocol::SthAndProof,
        }
    }

    /// The retained tree head with the largest size.
    pub fn best_sth(&self) -> Option<&SignedTreeHead> {
        match self {
            ClientState::P1(s) => s.sth.as_ref(),
            ClientState::P2(s) => s.sth_b.as_ref(),
        }
    }

    pub fn audited_count(&self) -> usize {
        match self {
            ClientState::P1(s) => s.audited_scts.len(),
            ClientState::P2(s) => s.audited_scts.len(),
        }
    }

    pub fn get_message(&self) -> Message {
        match self {
            ClientState::P1(s) => s.get_message(),
            ClientState::P2(s) => s.get_message(),
        }
    }

    pub fn update(&mut self, sct: Option<&SignedCertificateTimestamp>, m2: &Message, session: &mut Session<'_>) -> UpdateOutcome {
        match self {
            ClientState::P1(s) => s.update(sct, m2, session),
            ClientState::P2(s) => s.update(sct, m2, session),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerState {
    P1(ServerStateP1),
    P2(ServerStateP2),
}

impl ServerState {
    pub fn new(protocol: Protocol, storage_limit: usize) -> ServerState {
        match protocol {
            Protocol::SthOnly => ServerState::P1(ServerStateP1::default()),
            Protocol::SthAndProof => ServerState::P2(ServerStateP2::new(storage_limit)),
        }
    }

    pub fn protocol(&self) -> Protocol {
        match self {
            ServerState::P1(_) => Protocol::SthOnly,
            ServerState::P2(_) => Protocol::SthAndProof,
        }
    }

    pub fn best_sth(&self) -> Option<&SignedTreeHead> {
        match self {
            ServerState::P1(s) => s.sth.as_ref(),
            ServerState::P2(s) => s.largest_sth.as_ref(),
        }
    }

    /// Number of stored gossip messages (always 0 for Protocol 1).
    pub fn stored_messages(&self) -> usize {
        match self {
            ServerState::P1(_) => 0,
            ServerState::P2(s) => s.messages.len(),
        }
    }

    pub fn get_message(&self, m1: &Message, verifier: &LogVerifier) -> Message {
        match self {
            ServerState::P1(s) => s.get_message(m1, verifier),
            ServerState::P2(s) => s.get_message(m1, verifier),
        }
    }

    pub fn update(&mut self, m1: &Message, session: &mut Session<'_>) -> UpdateOutcome {
        match self {
            ServerState::P1(s) => s.update(m1, session),
            ServerState::P2(s) => s.update(m1, session),
        }
    }
}

/// Result of one node-level update.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeOutcome {
    /// Every log query issued, including alert verification.
    pub queries: Vec<LogQuery>,
    /// Alert this node raised from its own observation.
    pub raised: Option<AlertMessage>,
    /// How an alert received from the peer was handled.
    pub received: Option<AlertAction>,
    /// Alerts to hand to the monitor.
    pub reports: Vec<AlertMessage>,
    /// The node left alert mode during this update.
    pub cleared: bool,
}

#[derive(Debug, Clone)]
struct AlertLayer {
    mode: AlertMode,
    cache: ConfirmationCache,
}

impl AlertLayer {
    fn new(ttl_ms: u64) -> Self {
        AlertLayer { mode: AlertMode::default(), cache: ConfirmationCache::new(ttl_ms) }
    }

    /// Handles an incoming alert and, if the node is in alert mode, the
    /// periodic re-check. Returns whether normal flow may run.
    fn before_update(&mut self, incoming: &Message, session: &mut Session<'_>, out: &mut NodeOutcome) -> bool {
        if let Message::Alert(alert) = incoming {
            let action = handle_alert(alert, session, &mut self.cache);
            out.received = Some(action);
            if action != AlertAction::Drop && self.mode.enter(alert.clone(), session.now_ms) {
                out.reports.push(alert.clone());
            }
        }
        if self.mode.is_active() && self.mode.recheck(session, session.config.mmd_ms) {
            out.cleared = true;
        }
        !self.mode.is_active()
    }

    fn after_update(&mut self, result: UpdateOutcome, now_ms: u64, out: &mut NodeOutcome) {
        if let Some(alert) = result.alert {
            self.mode.enter(alert.clone(), now_ms);
            out.reports.push(alert.clone());
            out.raised = Some(alert);
        }
    }
}

/// A client: protocol state plus alert mode.
#[derive(Debug, Clone)]
pub struct ClientNode {
    pub id: PartyId,
    pub state: ClientState,
    alerts: AlertLayer,
}

impl ClientNode {
    pub fn new(id: PartyId, protocol: Protocol, mmd_ms: u64) -> ClientNode {
        ClientNode { id, state: ClientState::new(protocol), alerts: AlertLayer::new(mmd_ms) }
    }

    pub fn alert(&self) -> Option<&AlertMessage> {
        self.alerts.mode.current()
    }

    /// The alert replaces normal gossip while one is active.
    pub fn get_message(&self) -> Message {
        match self.alert() {
            Some(alert) => Message::Alert(alert.clone()),
            None => self.state.get_message(),
        }
    }

    pub fn update(&mut self, sct: Option<&SignedCertificateTimestamp>, m2: &Message, session: &mut Session<'_>) -> NodeOutcome {
        let mark = session.queries.len();
        let mut out = NodeOutcome::default();
        if self.alerts.before_update(m2, session, &mut out) {
            let gossip = if m2.as_alert().is_some() { &Message::Empty } else { m2 };
            let result = self.state.update(sct, gossip, session);
            self.alerts.after_update(result, session.now_ms, &mut out);
        }
        out.queries = session.queries[mark..].to_vec();
        out
    }
}

/// A web server taking part in gossip.
#[derive(Debug, Clone)]
pub struct ServerNode {
    pub id: PartyId,
    pub state: ServerState,
    alerts: AlertLayer,
}

impl ServerNode {
    pub fn new(id: PartyId, protocol: Protocol, storage_limit: usize, mmd_ms: u64) -> ServerNode {
        ServerNode { id, state: ServerState::new(protocol, storage_limit), alerts: AlertLayer::new(mmd_ms) }
    }

    pub fn alert(&self) -> Option<&AlertMessage> {
        self.alerts.mode.current()
    }

    pub fn get_message(&self, m1: &Message, verifier: &LogVerifier) -> Message {
        match self.alert() {
            Some(alert) => Message::Alert(alert.clone()),
            None => self.state.get_message(m1, verifier),
        }
    }

    pub fn update(&mut self, m1: &Message, session: &mut Session<'_>) -> NodeOutcome {
        let mark = session.queries.len();
        let mut out = NodeOutcome::default();
        if self.alerts.before_update(m1, session, &mut out) {
            let result = self.state.update(m1, session);
            self.alerts.after_update(result, session.now_ms, &mut out);
        }
        out.queries = session.queries[mark..].to_vec();
        out
    }
}
