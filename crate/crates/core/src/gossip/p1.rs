//! Protocol 1: STH-only gossip.

use std::collections::HashSet;

use super::{check_sths, valid_p1, GossipMessageP1, Message, QueryPurpose, Session, UpdateOutcome};
use crate::anomaly::{raise_inconsistency, AlertMessage};
use crate::gossip::AuditResult;
use crate::log::{LogVerifier, SignedCertificateTimestamp, SignedTreeHead};
use crate::merkle::Digest;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClientStateP1 {
    pub sth: Option<SignedTreeHead>,
    pub audited_scts: HashSet<Digest>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ServerStateP1 {
    pub sth: Option<SignedTreeHead>,
}

pub(crate) fn inconsistency(evidence: super::InconsistencyEvidence, session: &Session<'_>) -> AlertMessage {
    // every STH reaching check_sths has had its signature verified
    AlertMessage::Inconsistency(raise_inconsistency(&evidence, session.verifier).expect("verified tree heads"))
}

pub(crate) fn finish(session: &mut Session<'_>, mark: usize, result: Result<(), AlertMessage>) -> UpdateOutcome {
    UpdateOutcome { queries: session.queries[mark..].to_vec(), alert: result.err() }
}

impl ClientStateP1 {
    pub fn get_message(&self) -> Message {
        match &self.sth {
            Some(sth) => Message::P1(GossipMessageP1 { sth: sth.clone() }),
            None => Message::Empty,
        }
    }

    /// `sct` is the certificate timestamp that came with the connection, if
    /// the server is CT-enabled.
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
        if let Message::P1(m) = m2 {
            if valid_p1(m, session.verifier) {
                self.receive(&m.sth, session)?;
            }
        }
        if let Some(t) = sct {
            self.audit(t, session)?;
        }
        Ok(())
    }

    fn receive(&mut self, received: &SignedTreeHead, session: &mut Session<'_>) -> Result<(), AlertMessage> {
        let Some(current) = &self.sth else {
            self.sth = Some(received.clone());
            return Ok(());
        };
        check_sths([Some(current), Some(received)]).map_err(|e| inconsistency(e, session))?;
        if current.tree_size != received.tree_size {
            session.fetch_consistency(current, received, QueryPurpose::Gossip)?;
            if current.tree_size < received.tree_size {
                self.sth = Some(received.clone());
            }
        }
        Ok(())
    }

    fn audit(&mut self, t: &SignedCertificateTimestamp, session: &mut Session<'_>) -> Result<(), AlertMessage> {
        let key = t.fingerprint();
        if self.audited_scts.contains(&key) {
            return Ok(());
        }
        let latest = session.fetch_sth()?;
        check_sths([self.sth.as_ref(), Some(&latest)]).map_err(|e| inconsistency(e, session))?;
        let audit = session.fetch_audit(t, &latest)?;
        if let Some(current) = &self.sth {
            if current.tree_size < latest.tree_size {
                session.fetch_consistency(current, &latest, QueryPurpose::Audit)?;
            }
        }
        if self.sth.as_ref().is_none_or(|s| s.tree_size < latest.tree_size) {
            self.sth = Some(latest);
        }
        if matches!(audit, AuditResult::Included(_)) {
            self.audited_scts.insert(key);
        }
        Ok(())
    }

    /// Plain CT client without gossip: audits `sct`, optionally remembering
    /// it.
    pub fn audit_only(&mut self, sct: &SignedCertificateTimestamp, remember: bool, session: &mut Session<'_>) -> UpdateOutcome {
        let mark = session.queries.len();
        if !remember {
            self.audited_scts.clear();
        }
        let result = self.audit(sct, session);
        finish(session, mark, result)
    }
}

impl ServerStateP1 {
    pub fn get_message(&self, m1: &Message, verifier: &LogVerifier) -> Message {
        match (m1, &self.sth) {
            (Message::P1(m), Some(sth)) if valid_p1(m, verifier) => Message::P1(GossipMessageP1 { sth: sth.clone() }),
            _ => Message::Empty,
        }
    }

    pub fn update(&mut self, m1: &Message, session: &mut Session<'_>) -> UpdateOutcome {
        let mark = session.queries.len();
        let result = self.update_inner(m1, session);
        finish(session, mark, result)
    }

    fn update_inner(&mut self, m1: &Message, session: &mut Session<'_>) -> Result<(), AlertMessage> {
        let Message::P1(m) = m1 else {
            return Ok(());
        };
        if !valid_p1(m, session.verifier) {
            return Ok(());
        }
        let received = &m.sth;
        if let Some(current) = &self.sth {
            check_sths([Some(received), Some(current)]).map_err(|e| inconsistency(e, session))?;
            if received.tree_size != current.tree_size {
                session.fetch_consistency(received, current, QueryPurpose::Gossip)?;
            }
        }
        if self.sth.as_ref().is_none_or(|s| s.tree_size < received.tree_size) {
            self.sth = Some(received.clone());
        }
        Ok(())
    }
}
