//! [`LogApi`] over the log's HTTP interface.

use std::time::Duration;

use serde::de::DeserializeOwned;
use ureq::Agent;

use crate::api::{self, AddChainJson, ConsistencyJson, ProofByHashJson, SctJson, SthJson, PARTY_HEADER};
use ct_gossip_core::log::{LogApi, LogBehaviorPolicy, LogError, PartyId, SignedCertificateTimestamp, SignedTreeHead};
use ct_gossip_core::merkle::{leaf_hash, ConsistencyProof, Digest, InclusionProof};

pub fn agent() -> Agent {
    Agent::config_builder().http_status_as_error(false).timeout_global(Some(Duration::from_secs(10))).build().into()
}

#[derive(Clone)]
pub struct HttpLog {
    base: String,
    party: PartyId,
    log_id: Digest,
    agent: Agent,
}

impl HttpLog {
    pub fn new(base: &str, party: PartyId, log_id: Digest) -> HttpLog {
        HttpLog { base: base.trim_end_matches('/').to_string(), party, log_id, agent: agent() }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn get<T: DeserializeOwned>(&self, path: &str, missing: LogError) -> Result<T, LogError> {
        let url = format!("{}{}", self.base, path);
        let mut resp = self
            .agent
            .get(&url)
            .header(PARTY_HEADER, self.party.to_string())
            .call()
            .map_err(|e| LogError::Transport(e.to_string()))?;
        match resp.status().as_u16() {
            200 => resp.body_mut().read_json().map_err(|e| LogError::Transport(e.to_string())),
            400 | 404 => Err(missing),
            503 | 504 => Err(LogError::Timeout),
            other => Err(LogError::Transport(format!("HTTP {other} from {url}"))),
        }
    }

    /// Submits a certificate; the SCT commits to its leaf hash.
    pub fn add_chain(&self, cert: &[u8]) -> Result<SignedCertificateTimestamp, LogError> {
        self.post_chain("/ct/v1/add-chain", cert)
    }

    /// Submission through the attacker's back door; see `/admin/attack`.
    pub fn add_attack_chain(&self, cert: &[u8]) -> Result<SignedCertificateTimestamp, LogError> {
        self.post_chain("/admin/attack", cert)
    }

    /// Publishes the next tree head.
    pub fn advance(&self) -> Result<SignedTreeHead, LogError> {
        let url = format!("{}/admin/advance", self.base);
        let mut resp = self.agent.post(&url).send_empty().map_err(|e| LogError::Transport(e.to_string()))?;
        match resp.status().as_u16() {
            200 => {
                let sth: SthJson = resp.body_mut().read_json().map_err(|e| LogError::Transport(e.to_string()))?;
                sth.into_sth(self.log_id).map_err(LogError::Transport)
            }
            404 => Err(LogError::NoTreeHead),
            other => Err(LogError::Transport(format!("HTTP {other} from {url}"))),
        }
    }

    pub fn set_policy(&self, policy: &LogBehaviorPolicy) -> Result<(), LogError> {
        let url = format!("{}/admin/policy", self.base);
        let resp = self.agent.put(&url).send_json(policy).map_err(|e| LogError::Transport(e.to_string()))?;
        match resp.status().as_u16() {
            200 | 204 => Ok(()),
            other => Err(LogError::Transport(format!("HTTP {other} from {url}"))),
        }
    }

    fn post_chain(&self, path: &str, cert: &[u8]) -> Result<SignedCertificateTimestamp, LogError> {
        let url = format!("{}{}", self.base, path);
        let body = AddChainJson { chain: vec![api::b64(cert)] };
        let mut resp = self
            .agent
            .post(&url)
            .header(PARTY_HEADER, self.party.to_string())
            .send_json(&body)
            .map_err(|e| LogError::Transport(e.to_string()))?;
        match resp.status().as_u16() {
            200 => {
                let sct: SctJson = resp.body_mut().read_json().map_err(|e| LogError::Transport(e.to_string()))?;
                sct.into_sct(leaf_hash(cert)).map_err(LogError::Transport)
            }
            503 => Err(LogError::Timeout),
            other => Err(LogError::Transport(format!("HTTP {other} from {url}"))),
        }
    }
}

impl LogApi for HttpLog {
    fn get_sth(&mut self) -> Result<SignedTreeHead, LogError> {
        let sth: SthJson = self.get("/ct/v1/get-sth", LogError::NoTreeHead)?;
        sth.into_sth(self.log_id).map_err(LogError::Transport)
    }

    fn get_consistency_proof(&mut self, first: u64, second: u64) -> Result<ConsistencyProof, LogError> {
        let (old_size, new_size) = (first.min(second), first.max(second));
        let body: ConsistencyJson =
            self.get(&format!("/ct/v1/get-sth-consistency?first={old_size}&second={new_size}"), LogError::NotFound)?;
        let path = body.consistency.iter().map(|s| api::digest_from_b64(s)).collect::<Result<_, _>>();
        Ok(ConsistencyProof { old_size, new_size, path: path.map_err(LogError::Transport)? })
    }

    fn get_audit_proof(&mut self, sct: &SignedCertificateTimestamp, tree_size: u64) -> Result<InclusionProof, LogError> {
        let hash = url_escape(&api::b64(&sct.cert_digest.0));
        let body: ProofByHashJson =
            self.get(&format!("/ct/v1/get-proof-by-hash?hash={hash}&tree_size={tree_size}"), LogError::NotFound)?;
        let path = body.audit_path.iter().map(|s| api::digest_from_b64(s)).collect::<Result<_, _>>();
        Ok(InclusionProof { leaf_index: body.leaf_index, tree_size, path: path.map_err(LogError::Transport)? })
    }
}

/// Percent-encodes the base64 characters that are not URL safe.
fn url_escape(s: &str) -> String {
    s.replace('+', "%2B").replace('/', "%2F").replace('=', "%3D")
}
