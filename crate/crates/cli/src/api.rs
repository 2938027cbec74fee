//! JSON bodies of the log's HTTP API, modelled on RFC 6962.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use ct_gossip_core::log::{SignedCertificateTimestamp, SignedTreeHead};
use ct_gossip_core::merkle::Digest;

/// Header naming the requester, so the demo log can route split-world
/// traffic. A real log would have to guess from network addresses.
pub const PARTY_HEADER: &str = "X-CT-Party";

pub fn b64(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn unb64(s: &str) -> Result<Vec<u8>, String> {
    STANDARD.decode(s).map_err(|e| e.to_string())
}

pub fn digest_from_b64(s: &str) -> Result<Digest, String> {
    Digest::from_slice(&unb64(s)?).ok_or_else(|| "digest must be 32 bytes".to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SthJson {
    pub tree_size: u64,
    pub timestamp: u64,
    pub sha256_root_hash: String,
    pub tree_head_signature: String,
}

impl SthJson {
    pub fn from_sth(sth: &SignedTreeHead) -> SthJson {
        SthJson {
            tree_size: sth.tree_size,
            timestamp: sth.timestamp,
            sha256_root_hash: b64(&sth.root_hash.0),
            tree_head_signature: b64(&sth.signature),
        }
    }

    pub fn into_sth(self, log_id: Digest) -> Result<SignedTreeHead, String> {
        Ok(SignedTreeHead {
            tree_size: self.tree_size,
            timestamp: self.timestamp,
            root_hash: digest_from_b64(&self.sha256_root_hash)?,
            log_id,
            signature: unb64(&self.tree_head_signature)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyJson {
    pub consistency: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofByHashJson {
    pub leaf_index: u64,
    pub audit_path: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddChainJson {
    pub chain: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SctJson {
    pub sct_version: u8,
    pub id: String,
    pub timestamp: u64,
    pub extensions: String,
    pub signature: String,
}

impl SctJson {
    pub fn from_sct(sct: &SignedCertificateTimestamp) -> SctJson {
        SctJson {
            sct_version: 0,
            id: b64(&sct.log_id.0),
            timestamp: sct.timestamp,
            extensions: String::new(),
            signature: b64(&sct.signature),
        }
    }

    /// The SCT for `cert_digest`, the leaf hash of the submitted certificate.
    pub fn into_sct(self, cert_digest: Digest) -> Result<SignedCertificateTimestamp, String> {
        Ok(SignedCertificateTimestamp {
            log_id: digest_from_b64(&self.id)?,
            cert_digest,
            timestamp: self.timestamp,
            signature: unb64(&self.signature)?,
        })
    }
}

/// Where a gossip server's log lives, so probes can find it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogInfoJson {
    pub log_url: String,
    pub public_key: String,
    pub mmd_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusJson {
    pub status: ct_gossip_core::anomaly::LogStatus,
    pub reports: usize,
    pub duplicates: u64,
}
