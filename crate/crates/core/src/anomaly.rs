//! Warning and inconsistency alerts: construction, verification by
//! recipients, alert mode, and the monitor that adjudicates log trust.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gossip::{check_sths, InconsistencyEvidence, QueryPurpose, Session};
use crate::log::{LogVerifier, PartyId, SignedCertificateTimestamp, SignedTreeHead};
use crate::merkle::{sha256, verify_consistency, verify_inclusion, ConsistencyProof, Digest, InclusionProof};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningReason {
    LogUnresponsive,
    StaleSth,
    InvalidSignature,
    InvalidProof,
    SctNotIncluded,
}

impl WarningReason {
    pub const ALL: [WarningReason; 5] = [
        WarningReason::LogUnresponsive,
        WarningReason::StaleSth,
        WarningReason::InvalidSignature,
        WarningReason::InvalidProof,
        WarningReason::SctNotIncluded,
    ];

    pub fn code(self) -> u8 {
        match self {
            WarningReason::LogUnresponsive => 1,
            WarningReason::StaleSth => 2,
            WarningReason::InvalidSignature => 3,
            WarningReason::InvalidProof => 4,
            WarningReason::SctNotIncluded => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<WarningReason> {
        WarningReason::ALL.into_iter().find(|r| r.code() == code)
    }
}

/// The incriminated material attached to a warning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    Sth(SignedTreeHead),
    Consistency { first: SignedTreeHead, second: SignedTreeHead, proof: ConsistencyProof },
    Audit { sth: SignedTreeHead, sct: SignedCertificateTimestamp, proof: InclusionProof },
    Sct(SignedCertificateTimestamp),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningMessage {
    pub reason: WarningReason,
    pub evidence: Option<Evidence>,
    pub first_observed: u64,
    pub reporter: PartyId,
}

/// Two or more validly signed STHs that contradict each other.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InconsistencyMessage {
    pub sths: Vec<SignedTreeHead>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "alert", rename_all = "snake_case")]
pub enum AlertMessage {
    Warning(WarningMessage),
    Inconsistency(InconsistencyMessage),
}

impl AlertMessage {
    pub fn is_inconsistency(&self) -> bool {
        matches!(self, AlertMessage::Inconsistency(_))
    }

    /// Identity of the observation, independent of who reported it and when.
    pub fn evidence_digest(&self) -> Digest {
        let mut buf = Vec::new();
        match self {
            AlertMessage::Warning(w) => {
                buf.push(0x03);
                buf.push(w.reason.code());
                if let Some(e) = &w.evidence {
                    crate::wire::encode_evidence(e, &mut buf);
                }
            }
            AlertMessage::Inconsistency(m) => {
                buf.push(0x04);
                let mut fps: Vec<Digest> = m.sths.iter().map(SignedTreeHead::fingerprint).collect();
                fps.sort();
                for fp in fps {
                    buf.extend_from_slice(&fp.0);
                }
            }
        }
        sha256(&buf)
    }
}

impl From<WarningMessage> for AlertMessage {
    fn from(w: WarningMessage) -> Self {
        AlertMessage::Warning(w)
    }
}

impl From<InconsistencyMessage> for AlertMessage {
    fn from(m: InconsistencyMessage) -> Self {
        AlertMessage::Inconsistency(m)
    }
}

pub fn raise_warning(reason: WarningReason, evidence: Option<Evidence>, now_ms: u64, reporter: PartyId) -> WarningMessage {
    WarningMessage { reason, evidence, first_observed: now_ms, reporter }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnomalyError {
    #[error("an inconsistency needs at least two tree heads")]
    TooFewSths,
    #[error("tree head with size {0} does not carry a valid log signature")]
    UnverifiableSignature(u64),
    #[error("the tree heads are mutually consistent")]
    NotInconsistent,
}

pub fn raise_inconsistency(evidence: &InconsistencyEvidence, verifier: &LogVerifier) -> Result<InconsistencyMessage, AnomalyError> {
    let msg = InconsistencyMessage { sths: evidence.sths() };
    verify_inconsistency(&msg, verifier)?;
    Ok(msg)
}

/// Re-runs signature checks and the pairwise criteria.
pub fn verify_inconsistency(msg: &InconsistencyMessage, verifier: &LogVerifier) -> Result<(), AnomalyError> {
    if msg.sths.len() < 2 {
        return Err(AnomalyError::TooFewSths);
    }
    if let Some(bad) = msg.sths.iter().find(|s| !verifier.verify_sth(s)) {
        return Err(AnomalyError::UnverifiableSignature(bad.tree_size));
    }
    match check_sths(msg.sths.iter().map(Some)) {
        Err(_) => Ok(()),
        Ok(()) => Err(AnomalyError::NotInconsistent),
    }
}

/// Independently checks the claim in a warning against the log.
///
/// Returns `true` when the problem is observed locally too.
pub fn confirm_warning(w: &WarningMessage, session: &mut Session<'_>) -> bool {
    let verifier = session.verifier;
    if w.evidence.as_ref().is_some_and(evidence_refuted) {
        return false;
    }
    match (&w.reason, &w.evidence) {
        (WarningReason::LogUnresponsive, _) => {
            matches!(session.fetch_sth(), Err(WarningMessage { reason: WarningReason::LogUnresponsive, .. }))
        }
        (WarningReason::StaleSth, _) => {
            matches!(session.fetch_sth(), Err(WarningMessage { reason: WarningReason::StaleSth, .. }))
        }
        (WarningReason::InvalidSignature, _) => {
            matches!(session.fetch_sth(), Err(WarningMessage { reason: WarningReason::InvalidSignature, .. }))
        }
        (WarningReason::InvalidProof, Some(Evidence::Consistency { first, second, .. })) => {
            if !verifier.verify_sth(first) || !verifier.verify_sth(second) || first.tree_size >= second.tree_size {
                return false;
            }
            matches!(
                session.fetch_consistency(first, second, QueryPurpose::Alert),
                Err(WarningMessage { reason: WarningReason::InvalidProof, .. })
            )
        }
        (WarningReason::InvalidProof, Some(Evidence::Audit { sth, sct, .. })) => {
            if !verifier.verify_sth(sth) || !verifier.verify_sct(sct) {
                return false;
            }
            session.fetch_audit(sct, sth).is_err()
        }
        (WarningReason::SctNotIncluded, Some(Evidence::Sct(sct))) => {
            if !verifier.verify_sct(sct) {
                return false;
            }
            let Ok(latest) = session.fetch_sth() else {
                return false;
            };
            matches!(
                session.fetch_audit(sct, &latest),
                Err(WarningMessage { reason: WarningReason::SctNotIncluded, .. })
            )
        }
        _ => false,
    }
}

/// Recently confirmed observations; a hit skips re-contacting the log.
#[derive(Debug, Clone, Default)]
pub struct ConfirmationCache {
    ttl_ms: u64,
    entries: BTreeMap<Digest, u64>,
}

impl ConfirmationCache {
    pub fn new(ttl_ms: u64) -> Self {
        ConfirmationCache { ttl_ms, entries: BTreeMap::new() }
    }

    pub fn is_fresh(&self, key: &Digest, now_ms: u64) -> bool {
        self.entries.get(key).is_some_and(|&t| now_ms.saturating_sub(t) <= self.ttl_ms)
    }

    pub fn record(&mut self, key: Digest, now_ms: u64) {
        self.entries.insert(key, now_ms);
        let ttl = self.ttl_ms;
        self.entries.retain(|_, t| now_ms.saturating_sub(*t) <= ttl);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertAction {
    /// Cryptographic evidence, or a recently confirmed observation: forward
    /// without contacting the log.
    Propagate,
    /// Confirmed against the log; report and forward.
    VerifyThenPropagate,
    Drop,
}

/// Decides what to do with an alert received from a peer.
pub fn handle_alert(received: &AlertMessage, session: &mut Session<'_>, cache: &mut ConfirmationCache) -> AlertAction {
    match received {
        AlertMessage::Inconsistency(m) => match verify_inconsistency(m, session.verifier) {
            Ok(()) => AlertAction::Propagate,
            Err(_) => AlertAction::Drop,
        },
        AlertMessage::Warning(w) => {
            let key = received.evidence_digest();
            if cache.is_fresh(&key, session.now_ms) {
                return AlertAction::Propagate;
            }
            if confirm_warning(w, session) {
                cache.record(key, session.now_ms);
                AlertAction::VerifyThenPropagate
            } else {
                AlertAction::Drop
            }
        }
    }
}

/// The alert a node currently gossips in place of normal messages.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlertMode {
    current: Option<AlertMessage>,
    last_check_ms: u64,
}

impl AlertMode {
    pub fn current(&self) -> Option<&AlertMessage> {
        self.current.as_ref()
    }

    pub fn is_active(&self) -> bool {
        self.current.is_some()
    }

    /// Inconsistencies take priority over warnings and are never replaced.
    /// Returns whether the alert was adopted.
    pub fn enter(&mut self, alert: AlertMessage, now_ms: u64) -> bool {
        let adopt = match &self.current {
            None => true,
            Some(AlertMessage::Warning(_)) => alert.is_inconsistency(),
            Some(AlertMessage::Inconsistency(_)) => false,
        };
        if adopt {
            self.current = Some(alert);
            self.last_check_ms = now_ms;
        }
        adopt
    }

    /// Re-checks an active warning at most once per `interval_ms`; leaves
    /// alert mode when the problem is gone.
    pub fn recheck(&mut self, session: &mut Session<'_>, interval_ms: u64) -> bool {
        let Some(AlertMessage::Warning(w)) = &self.current else {
            return false;
        };
        if session.now_ms < self.last_check_ms.saturating_add(interval_ms) {
            return false;
        }
        self.last_check_ms = session.now_ms;
        let w = w.clone();
        if !confirm_warning(&w, session) {
            self.current = None;
            return true;
        }
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogStatus {
    Trusted,
    Suspect,
    Untrusted,
}

/// The monitor's view of one log.
#[derive(Debug, Clone)]
pub struct MonitorState {
    pub log_status: LogStatus,
    pub received_reports: Vec<AlertMessage>,
    pub confirmation_cache: ConfirmationCache,
    seen: BTreeSet<Digest>,
    pub duplicates: u64,
}

impl MonitorState {
    pub fn new(cache_ttl_ms: u64) -> Self {
        MonitorState {
            log_status: LogStatus::Trusted,
            received_reports: Vec::new(),
            confirmation_cache: ConfirmationCache::new(cache_ttl_ms),
            seen: BTreeSet::new(),
            duplicates: 0,
        }
    }

    /// Applies a report the monitor has already checked (`confirmed`);
    /// inconsistencies are always re-verified here.
    pub fn monitor_receive(&mut self, report: &AlertMessage, confirmed: bool, verifier: &LogVerifier) -> LogStatus {
        if self.log_status == LogStatus::Untrusted {
            return self.log_status;
        }
        let key = report.evidence_digest();
        if !self.seen.insert(key) {
            self.duplicates += 1;
            return self.log_status;
        }
        match report {
            AlertMessage::Inconsistency(m) => {
                if verify_inconsistency(m, verifier).is_ok() {
                    self.received_reports.push(report.clone());
                    self.log_status = LogStatus::Untrusted;
                } else {
                    self.seen.remove(&key);
                }
            }
            AlertMessage::Warning(_) => {
                if confirmed {
                    self.received_reports.push(report.clone());
                    self.log_status = self.log_status.max(LogStatus::Suspect);
                } else {
                    // unconfirmed reports may become confirmable later
                    self.seen.remove(&key);
                }
            }
        }
        self.log_status
    }

    /// Full intake: verifies warnings against the log (or the cache), then
    /// updates status.
    pub fn receive(&mut self, report: &AlertMessage, session: &mut Session<'_>) -> LogStatus {
        if self.log_status == LogStatus::Untrusted {
            return self.log_status;
        }
        if self.seen.contains(&report.evidence_digest()) {
            self.duplicates += 1;
            return self.log_status;
        }
        let confirmed = match report {
            AlertMessage::Inconsistency(_) => true,
            AlertMessage::Warning(_) => handle_alert(report, session, &mut self.confirmation_cache) != AlertAction::Drop,
        };
        let verifier = session.verifier;
        self.monitor_receive(report, confirmed, verifier)
    }
}

/// Checks an audit or consistency warning's attached proof offline. A
/// proof that does verify refutes the warning without asking the log.
pub fn evidence_refuted(evidence: &Evidence) -> bool {
    match evidence {
        Evidence::Consistency { first, second, proof } => {
            verify_consistency(first.tree_size, &first.root_hash, second.tree_size, &second.root_hash, proof)
        }
        Evidence::Audit { sth, sct, proof } => verify_inclusion(&sct.cert_digest, proof, &sth.root_hash),
        _ => false,
    }
}
