use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{LogApi, LogError, LogKey, LogVerifier, PartyId, SignedCertificateTimestamp, SignedTreeHead};
use crate::merkle::{leaf_hash, ChronTree, ConsistencyProof, Digest, InclusionProof};

/// Two hours.
pub const DEFAULT_MMD_MS: u64 = 2 * 60 * 60 * 1000;

/// How the log treats requesters. Exactly one mode is active at a time.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LogBehaviorPolicy {
    #[default]
    Honest,
    /// Requesters in `victims` see a second tree that carries the attacker's
    /// certificates; everybody else sees the public tree.
    SplitWorld { victims: BTreeSet<PartyId> },
    /// SCTs are issued for these certificate digests but the certificates
    /// are never merged.
    WithholdSct { certs: BTreeSet<Digest> },
    /// Every request after `after_ms` times out.
    Unresponsive { after_ms: u64 },
    /// Tree heads are served with a corrupted signature.
    BadSignature,
    /// Proofs are served with a corrupted node.
    BadProof,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogConfig {
    #[serde(with = "seed_hex")]
    pub key_seed: [u8; 32],
    #[serde(default = "default_mmd")]
    pub mmd_ms: u64,
    /// Virtual time at which the log is created; the first tree head is
    /// published one MMD later.
    #[serde(default)]
    pub start_ms: u64,
}

fn default_mmd() -> u64 {
    DEFAULT_MMD_MS
}

impl LogConfig {
    pub fn new(key_seed: [u8; 32]) -> LogConfig {
        LogConfig { key_seed, mmd_ms: DEFAULT_MMD_MS, start_ms: 0 }
    }
}

/// Virtual clock driving the merge cadence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogClock {
    pub mmd_ms: u64,
    pub now_ms: u64,
    pub last_boundary_ms: u64,
}

impl LogClock {
    pub fn next_boundary(&self) -> u64 {
        self.last_boundary_ms + self.mmd_ms
    }
}

#[derive(Clone, Default)]
struct Branch {
    tree: ChronTree,
    sths: Vec<SignedTreeHead>,
    index: HashMap<Digest, u64>,
}

impl Branch {
    fn append(&mut self, cert: &[u8]) {
        let digest = leaf_hash(cert);
        let idx = self.tree.append(cert);
        self.index.entry(digest).or_insert(idx);
    }
}

struct Pending {
    cert: Vec<u8>,
    victim_only: bool,
}

/// A single log. Honest by default; see [`LogBehaviorPolicy`] for the
/// adversarial modes.
pub struct LogService {
    key: LogKey,
    verifier: LogVerifier,
    clock: LogClock,
    policy: LogBehaviorPolicy,
    public: Branch,
    victim: Option<Branch>,
    queue: Vec<Pending>,
    padding: u64,
}

impl LogService {
    pub fn new(config: &LogConfig) -> LogService {
        let key = LogKey::from_seed(config.key_seed);
        LogService {
            verifier: key.verifier(),
            key,
            clock: LogClock { mmd_ms: config.mmd_ms, now_ms: config.start_ms, last_boundary_ms: config.start_ms },
            policy: LogBehaviorPolicy::Honest,
            public: Branch::default(),
            victim: None,
            queue: Vec::new(),
            padding: 0,
        }
    }

    pub fn key(&self) -> &LogKey {
        &self.key
    }

    pub fn verifier(&self) -> &LogVerifier {
        &self.verifier
    }

    pub fn clock(&self) -> LogClock {
        self.clock
    }

    pub fn policy(&self) -> &LogBehaviorPolicy {
        &self.policy
    }

    /// Moves the virtual clock forward; never backwards.
    pub fn set_time(&mut self, now_ms: u64) {
        self.clock.now_ms = self.clock.now_ms.max(now_ms);
    }

    pub fn configure(&mut self, policy: LogBehaviorPolicy) {
        self.policy = policy;
    }

    pub fn is_split(&self) -> bool {
        self.victim.is_some()
    }

    fn check_responsive(&self) -> Result<(), LogError> {
        match self.policy {
            LogBehaviorPolicy::Unresponsive { after_ms } if self.clock.now_ms > after_ms => Err(LogError::Timeout),
            _ => Ok(()),
        }
    }

    /// Accepts a certificate and promises to merge it at the next MMD boundary.
    pub fn submit(&mut self, cert: &[u8]) -> Result<SignedCertificateTimestamp, LogError> {
        self.check_responsive()?;
        let digest = leaf_hash(cert);
        let sct = self.key.sign_certificate(digest, self.clock.now_ms);
        let withheld = matches!(&self.policy, LogBehaviorPolicy::WithholdSct { certs } if certs.contains(&digest));
        if !withheld {
            self.queue.push(Pending { cert: cert.to_vec(), victim_only: false });
        }
        Ok(sct)
    }

    /// Submission by the attacker: under split-world the certificate only
    /// ever appears in the victims' tree.
    pub fn submit_attack(&mut self, cert: &[u8]) -> SignedCertificateTimestamp {
        let sct = self.key.sign_certificate(leaf_hash(cert), self.clock.now_ms);
        self.queue.push(Pending { cert: cert.to_vec(), victim_only: true });
        sct
    }

    /// Merges queued certificates and publishes the tree head for the next
    /// MMD boundary. Returns the public tree head, or `NoTreeHead` while the
    /// tree is still empty.
    pub fn advance_mmd(&mut self) -> Result<SignedTreeHead, LogError> {
        let boundary = self.clock.next_boundary();
        self.clock.last_boundary_ms = boundary;
        self.clock.now_ms = self.clock.now_ms.max(boundary);

        if matches!(self.policy, LogBehaviorPolicy::SplitWorld { .. }) && self.victim.is_none() {
            self.victim = Some(self.public.clone());
        }

        for pending in std::mem::take(&mut self.queue) {
            match (&mut self.victim, pending.victim_only) {
                (Some(victim), true) => {
                    victim.append(&pending.cert);
                    // keep both trees the same size
                    let pad = format!("padding-{}", self.padding);
                    self.padding += 1;
                    self.public.append(pad.as_bytes());
                }
                (Some(victim), false) => {
                    victim.append(&pending.cert);
                    self.public.append(&pending.cert);
                }
                (None, _) => self.public.append(&pending.cert),
            }
        }

        let key = &self.key;
        let publish = |branch: &mut Branch| -> Option<SignedTreeHead> {
            let size = branch.tree.size();
            let root = branch.tree.root(size).ok()?;
            let sth = key.sign_tree_head(size, boundary, root);
            branch.sths.push(sth.clone());
            Some(sth)
        };
        if let Some(victim) = self.victim.as_mut() {
            publish(victim);
        }
        publish(&mut self.public).ok_or(LogError::NoTreeHead)
    }

    fn branch_for(&self, requester: PartyId) -> &Branch {
        match (&self.policy, &self.victim) {
            (LogBehaviorPolicy::SplitWorld { victims }, Some(victim)) if victims.contains(&requester) => victim,
            _ => &self.public,
        }
    }

    /// Tree heads published on the branch `requester` is routed to.
    pub fn published(&self, requester: PartyId) -> &[SignedTreeHead] {
        &self.branch_for(requester).sths
    }

    pub fn tree_size(&self, requester: PartyId) -> u64 {
        self.branch_for(requester).tree.size()
    }

    pub fn get_sth(&self, requester: PartyId) -> Result<SignedTreeHead, LogError> {
        self.check_responsive()?;
        let mut sth = self.branch_for(requester).sths.last().cloned().ok_or(LogError::NoTreeHead)?;
        if self.policy == LogBehaviorPolicy::BadSignature {
            sth.signature[0] ^= 0x01;
        }
        Ok(sth)
    }

    /// Argument order is normalised: the proof always runs from the smaller
    /// to the larger size.
    pub fn get_consistency_proof(&self, requester: PartyId, a: u64, b: u64) -> Result<ConsistencyProof, LogError> {
        self.check_responsive()?;
        let (old, new) = (a.min(b), a.max(b));
        let mut proof = self.branch_for(requester).tree.consistency_proof(old, new)?;
        if self.policy == LogBehaviorPolicy::BadProof {
            corrupt(&mut proof.path);
        }
        Ok(proof)
    }

    pub fn get_audit_proof(
        &self,
        requester: PartyId,
        sct: &SignedCertificateTimestamp,
        tree_size: u64,
    ) -> Result<InclusionProof, LogError> {
        self.get_proof_by_hash(requester, &sct.cert_digest, tree_size)
    }

    pub fn get_proof_by_hash(&self, requester: PartyId, leaf: &Digest, tree_size: u64) -> Result<InclusionProof, LogError> {
        self.check_responsive()?;
        let branch = self.branch_for(requester);
        let index = *branch.index.get(leaf).ok_or(LogError::NotFound)?;
        if index >= tree_size {
            return Err(LogError::NotFound);
        }
        let mut proof = branch.tree.inclusion_proof(index, tree_size)?;
        if self.policy == LogBehaviorPolicy::BadProof {
            corrupt(&mut proof.path);
        }
        Ok(proof)
    }

    pub fn handle(&self, requester: PartyId) -> LogHandle<'_> {
        LogHandle { log: self, requester }
    }
}

fn corrupt(path: &mut Vec<Digest>) {
    match path.first_mut() {
        Some(node) => node.0[0] ^= 0xff,
        None => path.push(Digest([0xee; 32])),
    }
}

/// [`LogApi`] view of a [`LogService`] for one requester.
#[derive(Clone, Copy)]
pub struct LogHandle<'a> {
    log: &'a LogService,
    requester: PartyId,
}

impl LogApi for LogHandle<'_> {
    fn get_sth(&mut self) -> Result<SignedTreeHead, LogError> {
        self.log.get_sth(self.requester)
    }

    fn get_consistency_proof(&mut self, first: u64, second: u64) -> Result<ConsistencyProof, LogError> {
        self.log.get_consistency_proof(self.requester, first, second)
    }

    fn get_audit_proof(&mut self, sct: &SignedCertificateTimestamp, tree_size: u64) -> Result<InclusionProof, LogError> {
        self.log.get_audit_proof(self.requester, sct, tree_size)
    }
}

mod seed_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &[u8; 32], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(seed))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(deserializer)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        bytes.try_into().map_err(|_| serde::de::Error::custom("key seed must be 32 bytes"))
    }
}
