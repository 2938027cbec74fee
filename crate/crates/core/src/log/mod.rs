//! The log role: signed tree heads, signed certificate timestamps, signing
//! keys and the (possibly misbehaving) log service.

mod service;

pub use service::{LogBehaviorPolicy, LogClock, LogConfig, LogHandle, LogService, DEFAULT_MMD_MS};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::merkle::{sha256, ConsistencyProof, Digest, InclusionProof, MerkleError};

const STH_TAG: &[u8] = b"ct-gossip/sth/v1";
const SCT_TAG: &[u8] = b"ct-gossip/sct/v1";

/// Length of every signature the log produces.
pub const SIGNATURE_LEN: usize = 64;

/// Log commitment to `(tree_size, timestamp, root_hash)`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedTreeHead {
    pub tree_size: u64,
    pub timestamp: u64,
    pub root_hash: Digest,
    pub log_id: Digest,
    #[serde(with = "hex_bytes")]
    pub signature: Vec<u8>,
}

impl SignedTreeHead {
    pub fn signing_input(&self) -> Vec<u8> {
        sth_signing_input(self.tree_size, self.timestamp, &self.root_hash)
    }

    /// Stable identifier of this STH including its signature.
    pub fn fingerprint(&self) -> Digest {
        let mut buf = self.signing_input();
        buf.extend_from_slice(&self.log_id.0);
        buf.extend_from_slice(&self.signature);
        sha256(&buf)
    }
}

impl fmt::Debug for SignedTreeHead {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "STH(size={}, ts={}, root={:?})", self.tree_size, self.timestamp, self.root_hash)
    }
}

pub fn sth_signing_input(tree_size: u64, timestamp: u64, root_hash: &Digest) -> Vec<u8> {
    let mut buf = Vec::with_capacity(STH_TAG.len() + 48);
    buf.extend_from_slice(STH_TAG);
    buf.extend_from_slice(&tree_size.to_be_bytes());
    buf.extend_from_slice(&timestamp.to_be_bytes());
    buf.extend_from_slice(&root_hash.0);
    buf
}

/// The log's promise to merge a certificate within one MMD.
///
/// `cert_digest` is the Merkle leaf hash of the certificate payload, so it
/// doubles as the lookup key for audit proofs.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedCertificateTimestamp {
    pub log_id: Digest,
    pub cert_digest: Digest,
    pub timestamp: u64,
    #[serde(with = "hex_bytes")]
    pub signature: Vec<u8>,
}

impl SignedCertificateTimestamp {
    pub fn signing_input(&self) -> Vec<u8> {
        sct_signing_input(&self.log_id, &self.cert_digest, self.timestamp)
    }

    /// Digest stored in a client's audited-SCT set.
    pub fn fingerprint(&self) -> Digest {
        let mut buf = self.signing_input();
        buf.extend_from_slice(&self.signature);
        sha256(&buf)
    }
}

impl fmt::Debug for SignedCertificateTimestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SCT(cert={:?}, ts={})", self.cert_digest, self.timestamp)
    }
}

pub fn sct_signing_input(log_id: &Digest, cert_digest: &Digest, timestamp: u64) -> Vec<u8> {
    let mut buf = Vec::with_capacity(SCT_TAG.len() + 72);
    buf.extend_from_slice(SCT_TAG);
    buf.extend_from_slice(&log_id.0);
    buf.extend_from_slice(&cert_digest.0);
    buf.extend_from_slice(&timestamp.to_be_bytes());
    buf
}

/// The log's signing key. Deterministically derived from a 32-byte seed.
#[derive(Clone)]
pub struct LogKey {
    signing: SigningKey,
    log_id: Digest,
}

impl LogKey {
    pub fn from_seed(seed: [u8; 32]) -> LogKey {
        let signing = SigningKey::from_bytes(&seed);
        let log_id = sha256(signing.verifying_key().as_bytes());
        LogKey { signing, log_id }
    }

    pub fn log_id(&self) -> Digest {
        self.log_id
    }

    pub fn public_key(&self) -> [u8; 32] {
        self.signing.verifying_key().to_bytes()
    }

    pub fn verifier(&self) -> LogVerifier {
        LogVerifier::new(self.public_key()).expect("own key is valid")
    }

    pub fn sign(&self, msg: &[u8]) -> Vec<u8> {
        self.signing.sign(msg).to_bytes().to_vec()
    }

    pub fn sign_tree_head(&self, tree_size: u64, timestamp: u64, root_hash: Digest) -> SignedTreeHead {
        let signature = self.sign(&sth_signing_input(tree_size, timestamp, &root_hash));
        SignedTreeHead { tree_size, timestamp, root_hash, log_id: self.log_id, signature }
    }

    pub fn sign_certificate(&self, cert_digest: Digest, timestamp: u64) -> SignedCertificateTimestamp {
        let signature = self.sign(&sct_signing_input(&self.log_id, &cert_digest, timestamp));
        SignedCertificateTimestamp { log_id: self.log_id, cert_digest, timestamp, signature }
    }
}

impl fmt::Debug for LogKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LogKey").field("log_id", &self.log_id).finish_non_exhaustive()
    }
}

const VERIFY_CACHE_LIMIT: usize = 1 << 16;

/// Verifies log signatures with the log's public key.
///
/// Results are memoised per `(message, signature)` pair; gossip traffic
/// re-presents the same few STHs over and over.
#[derive(Debug)]
pub struct LogVerifier {
    key: VerifyingKey,
    log_id: Digest,
    cache: Mutex<HashMap<Digest, bool>>,
}

impl Clone for LogVerifier {
    fn clone(&self) -> Self {
        LogVerifier { key: self.key, log_id: self.log_id, cache: Mutex::new(HashMap::new()) }
    }
}

impl LogVerifier {
    pub fn new(public_key: [u8; 32]) -> Result<LogVerifier, ed25519_dalek::SignatureError> {
        let key = VerifyingKey::from_bytes(&public_key)?;
        Ok(LogVerifier { key, log_id: sha256(key.as_bytes()), cache: Mutex::new(HashMap::new()) })
    }

    pub fn log_id(&self) -> Digest {
        self.log_id
    }

    pub fn public_key(&self) -> [u8; 32] {
        self.key.to_bytes()
    }

    pub fn verify(&self, msg: &[u8], signature: &[u8]) -> bool {
        let Ok(sig) = ed25519_dalek::Signature::from_slice(signature) else {
            return false;
        };
        let mut cache_key = msg.to_vec();
        cache_key.extend_from_slice(signature);
        let cache_key = sha256(&cache_key);
        if let Some(&hit) = self.cache.lock().expect("verify cache").get(&cache_key) {
            return hit;
        }
        let ok = self.key.verify_strict(msg, &sig).is_ok();
        let mut cache = self.cache.lock().expect("verify cache");
        if cache.len() >= VERIFY_CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(cache_key, ok);
        ok
    }

    pub fn verify_sth(&self, sth: &SignedTreeHead) -> bool {
        sth.tree_size >= 1 && sth.log_id == self.log_id && self.verify(&sth.signing_input(), &sth.signature)
    }

    pub fn verify_sct(&self, sct: &SignedCertificateTimestamp) -> bool {
        sct.log_id == self.log_id && self.verify(&sct.signing_input(), &sct.signature)
    }
}

/// Identity of a party talking to the log. Split-world routing keys on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PartyId {
    Client(u32),
    Server(u32),
    Monitor,
    Attacker,
    Anonymous,
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Client(id) => write!(f, "client-{id}"),
            PartyId::Server(id) => write!(f, "server-{id}"),
            PartyId::Monitor => f.write_str("monitor"),
            PartyId::Attacker => f.write_str("attacker"),
            PartyId::Anonymous => f.write_str("anonymous"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unrecognised party id {0:?}")]
pub struct ParsePartyError(String);

impl FromStr for PartyId {
    type Err = ParsePartyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParsePartyError(s.to_string());
        match s {
            "monitor" => Ok(PartyId::Monitor),
            "attacker" => Ok(PartyId::Attacker),
            "anonymous" => Ok(PartyId::Anonymous),
            _ => {
                let (kind, id) = s.split_once('-').ok_or_else(err)?;
                let id: u32 = id.parse().map_err(|_| err())?;
                match kind {
                    "client" => Ok(PartyId::Client(id)),
                    "server" => Ok(PartyId::Server(id)),
                    _ => Err(err()),
                }
            }
        }
    }
}

impl Serialize for PartyId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PartyId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogError {
    #[error("log did not respond")]
    Timeout,
    #[error("certificate not found in the requested tree")]
    NotFound,
    #[error("log has not published a tree head yet")]
    NoTreeHead,
    #[error(transparent)]
    Range(#[from] MerkleError),
    #[error("transport failure: {0}")]
    Transport(String),
}

/// Read access to a log, as seen by one requester.
pub trait LogApi {
    fn get_sth(&mut self) -> Result<SignedTreeHead, LogError>;
    fn get_consistency_proof(&mut self, first: u64, second: u64) -> Result<ConsistencyProof, LogError>;
    fn get_audit_proof(&mut self, sct: &SignedCertificateTimestamp, tree_size: u64) -> Result<InclusionProof, LogError>;
}

impl<T: LogApi + ?Sized> LogApi for &mut T {
    fn get_sth(&mut self) -> Result<SignedTreeHead, LogError> {
        (**self).get_sth()
    }

    fn get_consistency_proof(&mut self, first: u64, second: u64) -> Result<ConsistencyProof, LogError> {
        (**self).get_consistency_proof(first, second)
    }

    fn get_audit_proof(&mut self, sct: &SignedCertificateTimestamp, tree_size: u64) -> Result<InclusionProof, LogError> {
        (**self).get_audit_proof(sct, tree_size)
    }
}

pub(crate) mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(deserializer)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}
