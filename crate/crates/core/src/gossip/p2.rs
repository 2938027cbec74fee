//! Protocol 2: STH-and-consistency-proof gossip.

use std::collections::{BTreeMap, HashSet};

use super::p1::{finish, inconsistency};
use super::{check_sths, valid_p2, AuditResult, GossipMessageP2, Message, QueryPurpose, Session, UpdateOutcome};
use crate::anomaly::AlertMessage;
use crate::log::{LogVerifier, SignedCertificateTimestamp, SignedTreeHead};
use crate::merkle::{ConsistencyProof, Digest};

/// Default bound on the server's message map.
pub const DEFAULT_STORAGE_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClientStateP2 {
    pub sth_a: Option<SignedTreeHead>,
    pub sth_b: Option<SignedTreeHead>,
    pub proof_ab: Option<ConsistencyProof>,
    pub audited_scts: HashSet<Digest>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerStateP2 {
    pub largest_sth: Option<SignedTreeHead>,
    /// Keyed by the tree size of a message's first STH.
    pub messages: BTreeMap<u64, GossipMessageP2>,
    pub default_message: Option<GossipMessageP2>,
    pub storage_limit: usize,
}

impl Default for ServerStateP2 {
    fn default() -> Self {
        ServerStateP2::new(DEFAULT_STORAGE_LIMIT)
    }
}

/// A P2 message whose proof fails but whose tree heads are both validly
/// signed still carries evidence worth checking.
fn signed_pair<'m>(m: &'m Message, session: &Session<'_>) -> Option<&'m GossipMessageP2> {
    match m {
        Message::P2(m) if session.verifier.verify_sth(&m.sth_a) && session.verifier.verify_sth(&m.sth_b) => Some(m),
        _ => None,
    }
}

impl ClientStateP2 {
    pub fn get_message(&self) -> Message {
        match (&self.sth_a, &self.sth_b, &self.proof_ab) {
            (Some(a), Some(b), Some(p)) => Message::P2(GossipMessageP2 { sth_a: a.clone(), sth_b: b.clone(), proof: p.clone() }),
            _ => Message::Empty,
        }
    }

    /// The tree head this client treats as its latest.
    pub fn best_sth(&self) -> Option<&SignedTreeHead> {
        self.sth_b.as_ref()
    }

    pub fn update(&mut self, sct: Option<&SignedCertificateTimestamp>, m2: &Message, session: &mut Session<'_>) -> UpdateOutcome {
        let mark = session.queries.len();
        let result = self.update_inner(sct, m2, session);
        finish(session, mark, result)
    }

    fn update_inner(
        &mut self,
        sct: Option<&SignedCertificateTimestamp>,
        m2: &Message,
        session: &mut Session<'_>,
    ) -> Result<(), AlertMessage> {
        if let Some(m) = signed_pair(m2, session) {
            check_sths([self.sth_a.as_ref(), self.sth_b.as_ref(), Some(&m.sth_a), Some(&m.sth_b)])
                .map_err(|e| inconsistency(e, session))?;
            if valid_p2(m, session.verifier) {
                self.receive(m, session)?;
            }
        }
        if let Some(t) = sct {
            self.audit(t, session)?;
        }
        Ok(())
    }

    fn receive(&mut self, m: &GossipMessageP2, session: &mut Session<'_>) -> Result<(), AlertMessage> {
        let Some(b) = &self.sth_b else {
            self.adopt(m);
            return Ok(());
        };
        let (c, d) = (m.first_size(), m.second_size());
        if b.tree_size != c && b.tree_size != d {
            session.fetch_consistency(b, &m.sth_b, QueryPurpose::Gossip)?;
        }
        if b.tree_size < d {
            self.adopt(m);
        }
        Ok(())
    }

    fn adopt(&mut self, m: &GossipMessageP2) {
        self.sth_a = Some(m.sth_a.clone());
        self.sth_b = Some(m.sth_b.clone());
        self.proof_ab = Some(m.proof.clone());
    }

    fn audit(&mut self, t: &SignedCertificateTimestamp, session: &mut Session<'_>) -> Result<(), AlertMessage> {
        let key = t.fingerprint();
        if self.audited_scts.contains(&key) {
            return Ok(());
        }
        let latest = session.fetch_sth()?;
        check_sths([self.sth_b.as_ref(), Some(&latest)]).map_err(|e| inconsistency(e, session))?;
        let audit = session.fetch_audit(t, &latest)?;
        match self.sth_b.take() {
            Some(b) if b.tree_size < latest.tree_size => {
                let proof = match session.fetch_consistency(&b, &latest, QueryPurpose::Audit) {
                    Ok(p) => p,
                    Err(w) => {
                        self.sth_b = Some(b);
                        return Err(w.into());
                    }
                };
                self.sth_a = Some(b);
                self.sth_b = Some(latest);
                self.proof_ab = Some(proof);
            }
            Some(b) => self.sth_b = Some(b),
            None => self.sth_b = Some(latest),
        }
        if matches!(audit, AuditResult::Included(_)) {
            self.audited_scts.insert(key);
        }
        Ok(())
    }
}

impl ServerStateP2 {
    pub fn new(storage_limit: usize) -> Self {
        ServerStateP2 { largest_sth: None, messages: BTreeMap::new(), default_message: None, storage_limit }
    }

    pub fn get_message(&self, m1: &Message, verifier: &LogVerifier) -> Message {
        let Message::P2(m) = m1 else {
            return Message::Empty;
        };
        if self.messages.is_empty() || !valid_p2(m, verifier) {
            return Message::Empty;
        }
        match self.messages.get(&m.second_size()) {
            Some(stored) => Message::P2(stored.clone()),
            None => self.default_message.clone().map_or(Message::Empty, Message::P2),
        }
    }

    pub fn update(&mut self, m1: &Message, session: &mut Session<'_>) -> UpdateOutcome {
        let mark = session.queries.len();
        let result = self.update_inner(m1, session);
        finish(session, mark, result)
    }

    fn update_inner(&mut self, m1: &Message, session: &mut Session<'_>) -> Result<(), AlertMessage> {
        let Some(m) = signed_pair(m1, session) else {
            return Ok(());
        };
        let (a, b) = (m.first_size(), m.second_size());
        if !valid_p2(m, session.verifier) {
            // dropped, but signed contradictions are still evidence
            if let Some(n) = &self.largest_sth {
                check_sths([Some(&m.sth_a), Some(&m.sth_b), Some(n)]).map_err(|e| inconsistency(e, session))?;
            }
            return Ok(());
        }

        if let Some(sn) = self.largest_sth.clone() {
            let n = sn.tree_size;
            let stored_a = self.messages.get(&a);
            let stored_b = self.messages.get(&b);
            check_sths([
                Some(&m.sth_a),
                Some(&m.sth_b),
                Some(&sn),
                stored_a.map(|g| &g.sth_a),
                stored_a.map(|g| &g.sth_b),
                stored_b.map(|g| &g.sth_a),
                stored_b.map(|g| &g.sth_b),
            ])
            .map_err(|e| inconsistency(e, session))?;

            let both_known = stored_a.is_some() && stored_b.is_some();
            if a != n && n != b && !both_known {
                let proof = session.fetch_consistency(&m.sth_b, &sn, QueryPurpose::Gossip)?;
                let bridge = if b < n {
                    GossipMessageP2 { sth_a: m.sth_b.clone(), sth_b: sn.clone(), proof }
                } else {
                    GossipMessageP2 { sth_a: sn.clone(), sth_b: m.sth_b.clone(), proof }
                };
                self.messages.insert(bridge.first_size(), bridge);
            }
        }

        match self.largest_sth.as_ref().map(|s| s.tree_size) {
            None => self.promote(m),
            Some(n) if n < b => self.promote(m),
            Some(n) if n == b => {
                self.messages.insert(a, m.clone());
            }
            Some(_) => {}
        }
        while self.messages.len() > self.storage_limit {
            self.messages.pop_first();
        }
        Ok(())
    }

    fn promote(&mut self, m: &GossipMessageP2) {
        self.largest_sth = Some(m.sth_b.clone());
        self.default_message = Some(m.clone());
        self.messages.insert(m.first_size(), m.clone());
    }
}
