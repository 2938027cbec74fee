use serde::{Deserialize, Serialize};

use super::{LogQuery, QueryPurpose};
use crate::anomaly::{raise_warning, Evidence, WarningMessage, WarningReason};
use crate::log::{LogApi, LogError, LogVerifier, PartyId, SignedCertificateTimestamp, SignedTreeHead, DEFAULT_MMD_MS};
use crate::merkle::{verify_consistency, verify_inclusion, ConsistencyProof, InclusionProof};

/// Per-node knobs shared by every protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub mmd_ms: u64,
    /// Attempts before the log is declared unresponsive.
    pub retry_limit: u32,
    /// Whether the user agreed to gossip SCTs the log failed to merge.
    pub consent: bool,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig { mmd_ms: DEFAULT_MMD_MS, retry_limit: 3, consent: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditResult {
    Included(InclusionProof),
    /// Not in the tree yet, but the SCT is younger than one MMD relative to
    /// the tree head, so the promise is not broken.
    Pending,
}

/// One party's access to the log for the duration of an update: records
/// every query, retries timeouts and verifies everything it fetches.
pub struct Session<'a> {
    log: &'a mut dyn LogApi,
    pub verifier: &'a LogVerifier,
    pub config: NodeConfig,
    pub party: PartyId,
    pub now_ms: u64,
    pub queries: Vec<LogQuery>,
}

impl<'a> Session<'a> {
    pub fn new(log: &'a mut dyn LogApi, verifier: &'a LogVerifier, config: NodeConfig, party: PartyId, now_ms: u64) -> Self {
        Session { log, verifier, config, party, now_ms, queries: Vec::new() }
    }

    pub fn warning(&self, reason: WarningReason, evidence: Option<Evidence>) -> WarningMessage {
        raise_warning(reason, evidence, self.now_ms, self.party)
    }

    fn retry<T>(&mut self, mut call: impl FnMut(&mut dyn LogApi) -> Result<T, LogError>) -> Result<T, LogError> {
        let attempts = self.config.retry_limit.max(1);
        let mut last = LogError::Timeout;
        for _ in 0..attempts {
            match call(self.log) {
                Err(e @ (LogError::Timeout | LogError::Transport(_) | LogError::NoTreeHead)) => last = e,
                other => return other,
            }
        }
        Err(last)
    }

    fn unresponsive(&self) -> WarningMessage {
        self.warning(WarningReason::LogUnresponsive, None)
    }

    /// Fetches the latest tree head, checking signature and freshness.
    pub fn fetch_sth(&mut self) -> Result<SignedTreeHead, WarningMessage> {
        self.queries.push(LogQuery::GetSth);
        let sth = self.retry(|log| log.get_sth()).map_err(|_| self.unresponsive())?;
        if !self.verifier.verify_sth(&sth) {
            return Err(self.warning(WarningReason::InvalidSignature, Some(Evidence::Sth(sth))));
        }
        if sth.timestamp.saturating_add(self.config.mmd_ms) < self.now_ms {
            return Err(self.warning(WarningReason::StaleSth, Some(Evidence::Sth(sth))));
        }
        Ok(sth)
    }

    /// Fetches and verifies a consistency proof between two signed heads
    /// (in either order).
    pub fn fetch_consistency(
        &mut self,
        x: &SignedTreeHead,
        y: &SignedTreeHead,
        purpose: QueryPurpose,
    ) -> Result<ConsistencyProof, WarningMessage> {
        let (old, new) = if x.tree_size <= y.tree_size { (x, y) } else { (y, x) };
        self.queries.push(LogQuery::consistency(old.tree_size, new.tree_size, purpose));
        let fetched = self.retry(|log| log.get_consistency_proof(old.tree_size, new.tree_size));
        let proof = match fetched {
            Ok(p) => p,
            Err(LogError::Range(_) | LogError::NotFound) => ConsistencyProof {
                old_size: old.tree_size,
                new_size: new.tree_size,
                path: Vec::new(),
            },
            Err(_) => return Err(self.unresponsive()),
        };
        if verify_consistency(old.tree_size, &old.root_hash, new.tree_size, &new.root_hash, &proof) {
            Ok(proof)
        } else {
            Err(self.warning(
                WarningReason::InvalidProof,
                Some(Evidence::Consistency { first: old.clone(), second: new.clone(), proof }),
            ))
        }
    }

    /// Fetches and verifies the audit proof for `sct` against `sth`.
    pub fn fetch_audit(&mut self, sct: &SignedCertificateTimestamp, sth: &SignedTreeHead) -> Result<AuditResult, WarningMessage> {
        self.queries.push(LogQuery::GetAuditProof { tree_size: sth.tree_size });
        match self.retry(|log| log.get_audit_proof(sct, sth.tree_size)) {
            Ok(proof) => {
                if verify_inclusion(&sct.cert_digest, &proof, &sth.root_hash) {
                    Ok(AuditResult::Included(proof))
                } else {
                    Err(self.warning(
                        WarningReason::InvalidProof,
                        Some(Evidence::Audit { sth: sth.clone(), sct: sct.clone(), proof }),
                    ))
                }
            }
            Err(LogError::NotFound | LogError::Range(_)) => {
                if merge_deadline_passed(sct, sth, self.config.mmd_ms) {
                    let evidence = self.config.consent.then(|| Evidence::Sct(sct.clone()));
                    Err(self.warning(WarningReason::SctNotIncluded, evidence))
                } else {
                    Ok(AuditResult::Pending)
                }
            }
            Err(_) => Err(self.unresponsive()),
        }
    }
}

/// The tree head is more than one MMD younger than the SCT, so the
/// certificate must be in it.
pub(crate) fn merge_deadline_passed(sct: &SignedCertificateTimestamp, sth: &SignedTreeHead, mmd_ms: u64) -> bool {
    sth.timestamp > sct.timestamp.saturating_add(mmd_ms)
}
