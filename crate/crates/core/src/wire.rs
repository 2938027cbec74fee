//! Canonical byte encodings for gossip and alert messages, and the HTTP
//! header carrying them.
//!
//! All integers are fixed-width big-endian.
//!
//! ```text
//! sth      = tree_size(8) timestamp(8) root(32) log_id(32) sig_len(2) sig
//! sct      = log_id(32) cert_digest(32) timestamp(8) sig_len(2) sig
//! path     = count(2) digest(32)*
//! P1       = 0x01 sth
//! P2       = 0x02 sth_a sth_b path            (sth_a.tree_size < sth_b.tree_size)
//! warning  = 0x03 reason(1) first_observed(8) party(5) evidence
//! inconsis = 0x04 count(1) sth*               (count >= 2)
//! ```
//!
//! The empty message encodes to zero bytes.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use thiserror::Error;

use crate::anomaly::{AlertMessage, Evidence, InconsistencyMessage, WarningMessage, WarningReason};
use crate::gossip::{GossipMessageP1, GossipMessageP2, Message};
use crate::log::{PartyId, SignedCertificateTimestamp, SignedTreeHead};
use crate::merkle::{ConsistencyProof, Digest, InclusionProof, DIGEST_LEN};

pub const TAG_P1: u8 = 0x01;
pub const TAG_P2: u8 = 0x02;
pub const TAG_WARNING: u8 = 0x03;
pub const TAG_INCONSISTENCY: u8 = 0x04;

/// Header carrying a base64-encoded message.
pub const GOSSIP_HEADER: &str = "X-CT-Gossip";
/// Header carrying the server's SCT in the network demo.
pub const SCT_HEADER: &str = "X-CT-SCT";
/// Smallest header budget commonly configured by web servers.
pub const HEADER_BUDGET: usize = 4096;

const EVIDENCE_NONE: u8 = 0;
const EVIDENCE_STH: u8 = 1;
const EVIDENCE_CONSISTENCY: u8 = 2;
const EVIDENCE_AUDIT: u8 = 3;
const EVIDENCE_SCT: u8 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("message truncated")]
    Truncated,
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("unknown message tag {0:#04x}")]
    UnknownTag(u8),
    #[error("first tree size must be smaller than the second")]
    BadOrder,
    #[error("unknown warning reason {0}")]
    BadReason(u8),
    #[error("unknown evidence kind {0}")]
    BadEvidence(u8),
    #[error("unknown party kind {0}")]
    BadParty(u8),
    #[error("an inconsistency needs at least two tree heads")]
    TooFewSths,
    #[error("invalid base64")]
    Base64,
}

fn put_u16(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u16::try_from(v).expect("length fits in u16").to_be_bytes());
}

pub fn encode_sth(sth: &SignedTreeHead, out: &mut Vec<u8>) {
    out.extend_from_slice(&sth.tree_size.to_be_bytes());
    out.extend_from_slice(&sth.timestamp.to_be_bytes());
    out.extend_from_slice(&sth.root_hash.0);
    out.extend_from_slice(&sth.log_id.0);
    put_u16(out, sth.signature.len());
    out.extend_from_slice(&sth.signature);
}

pub fn encode_sct(sct: &SignedCertificateTimestamp, out: &mut Vec<u8>) {
    out.extend_from_slice(&sct.log_id.0);
    out.extend_from_slice(&sct.cert_digest.0);
    out.extend_from_slice(&sct.timestamp.to_be_bytes());
    put_u16(out, sct.signature.len());
    out.extend_from_slice(&sct.signature);
}

fn encode_path(path: &[Digest], out: &mut Vec<u8>) {
    put_u16(out, path.len());
    for d in path {
        out.extend_from_slice(&d.0);
    }
}

fn encode_party(party: PartyId, out: &mut Vec<u8>) {
    let (kind, id) = match party {
        PartyId::Client(id) => (0u8, id),
        PartyId::Server(id) => (1, id),
        PartyId::Monitor => (2, 0),
        PartyId::Attacker => (3, 0),
        PartyId::Anonymous => (4, 0),
    };
    out.push(kind);
    out.extend_from_slice(&id.to_be_bytes());
}

pub(crate) fn encode_evidence(evidence: &Evidence, out: &mut Vec<u8>) {
    match evidence {
        Evidence::Sth(sth) => {
            out.push(EVIDENCE_STH);
            encode_sth(sth, out);
        }
        Evidence::Consistency { first, second, proof } => {
            out.push(EVIDENCE_CONSISTENCY);
            encode_sth(first, out);
            encode_sth(second, out);
            out.extend_from_slice(&proof.old_size.to_be_bytes());
            out.extend_from_slice(&proof.new_size.to_be_bytes());
            encode_path(&proof.path, out);
        }
        Evidence::Audit { sth, sct, proof } => {
            out.push(EVIDENCE_AUDIT);
            encode_sth(sth, out);
            encode_sct(sct, out);
            out.extend_from_slice(&proof.leaf_index.to_be_bytes());
            out.extend_from_slice(&proof.tree_size.to_be_bytes());
            encode_path(&proof.path, out);
        }
        Evidence::Sct(sct) => {
            out.push(EVIDENCE_SCT);
            encode_sct(sct, out);
        }
    }
}

pub fn encode_message(m: &Message) -> Vec<u8> {
    let mut out = Vec::new();
    match m {
        Message::Empty => {}
        Message::P1(p1) => {
            out.push(TAG_P1);
            encode_sth(&p1.sth, &mut out);
        }
        Message::P2(p2) => {
            out.push(TAG_P2);
            encode_sth(&p2.sth_a, &mut out);
            encode_sth(&p2.sth_b, &mut out);
            encode_path(&p2.proof.path, &mut out);
        }
        Message::Alert(AlertMessage::Warning(w)) => {
            out.push(TAG_WARNING);
            out.push(w.reason.code());
            out.extend_from_slice(&w.first_observed.to_be_bytes());
            encode_party(w.reporter, &mut out);
            match &w.evidence {
                None => out.push(EVIDENCE_NONE),
                Some(e) => encode_evidence(e, &mut out),
            }
        }
        Message::Alert(AlertMessage::Inconsistency(inc)) => {
            out.push(TAG_INCONSISTENCY);
            out.push(u8::try_from(inc.sths.len()).expect("at most 255 tree heads"));
            for sth in &inc.sths {
                encode_sth(sth, &mut out);
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < n {
            return Err(DecodeError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<usize, DecodeError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("2 bytes")) as usize)
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn digest(&mut self) -> Result<Digest, DecodeError> {
        Ok(Digest::from_slice(self.take(DIGEST_LEN)?).expect("32 bytes"))
    }

    fn sth(&mut self) -> Result<SignedTreeHead, DecodeError> {
        let tree_size = self.u64()?;
        let timestamp = self.u64()?;
        let root_hash = self.digest()?;
        let log_id = self.digest()?;
        let sig_len = self.u16()?;
        let signature = self.take(sig_len)?.to_vec();
        Ok(SignedTreeHead { tree_size, timestamp, root_hash, log_id, signature })
    }

    fn sct(&mut self) -> Result<SignedCertificateTimestamp, DecodeError> {
        let log_id = self.digest()?;
        let cert_digest = self.digest()?;
        let timestamp = self.u64()?;
        let sig_len = self.u16()?;
        let signature = self.take(sig_len)?.to_vec();
        Ok(SignedCertificateTimestamp { log_id, cert_digest, timestamp, signature })
    }

    fn path(&mut self) -> Result<Vec<Digest>, DecodeError> {
        let count = self.u16()?;
        if self.buf.len() < count * DIGEST_LEN {
            return Err(DecodeError::Truncated);
        }
        (0..count).map(|_| self.digest()).collect()
    }

    fn party(&mut self) -> Result<PartyId, DecodeError> {
        let kind = self.u8()?;
        let id = self.u32()?;
        match (kind, id) {
            (0, id) => Ok(PartyId::Client(id)),
            (1, id) => Ok(PartyId::Server(id)),
            (2, 0) => Ok(PartyId::Monitor),
            (3, 0) => Ok(PartyId::Attacker),
            (4, 0) => Ok(PartyId::Anonymous),
            _ => Err(DecodeError::BadParty(kind)),
        }
    }

    fn evidence(&mut self) -> Result<Option<Evidence>, DecodeError> {
        let kind = self.u8()?;
        Ok(Some(match kind {
            EVIDENCE_NONE => return Ok(None),
            EVIDENCE_STH => Evidence::Sth(self.sth()?),
            EVIDENCE_CONSISTENCY => {
                let first = self.sth()?;
                let second = self.sth()?;
                let old_size = self.u64()?;
                let new_size = self.u64()?;
                let path = self.path()?;
                Evidence::Consistency { first, second, proof: ConsistencyProof { old_size, new_size, path } }
            }
            EVIDENCE_AUDIT => {
                let sth = self.sth()?;
                let sct = self.sct()?;
                let leaf_index = self.u64()?;
                let tree_size = self.u64()?;
                let path = self.path()?;
                Evidence::Audit { sth, sct, proof: InclusionProof { leaf_index, tree_size, path } }
            }
            EVIDENCE_SCT => Evidence::Sct(self.sct()?),
            other => return Err(DecodeError::BadEvidence(other)),
        }))
    }

    fn finish(&self) -> Result<(), DecodeError> {
        match self.buf.len() {
            0 => Ok(()),
            n => Err(DecodeError::TrailingBytes(n)),
        }
    }
}

pub fn decode_message(bytes: &[u8]) -> Result<Message, DecodeError> {
    let mut r = Reader { buf: bytes };
    if bytes.is_empty() {
        return Ok(Message::Empty);
    }
    let msg = match r.u8()? {
        TAG_P1 => Message::P1(GossipMessageP1 { sth: r.sth()? }),
        TAG_P2 => {
            let sth_a = r.sth()?;
            let sth_b = r.sth()?;
            if sth_a.tree_size >= sth_b.tree_size {
                return Err(DecodeError::BadOrder);
            }
            let path = r.path()?;
            let proof = ConsistencyProof { old_size: sth_a.tree_size, new_size: sth_b.tree_size, path };
            Message::P2(GossipMessageP2 { sth_a, sth_b, proof })
        }
        TAG_WARNING => {
            let code = r.u8()?;
            let reason = WarningReason::from_code(code).ok_or(DecodeError::BadReason(code))?;
            let first_observed = r.u64()?;
            let reporter = r.party()?;
            let evidence = r.evidence()?;
            Message::Alert(AlertMessage::Warning(WarningMessage { reason, evidence, first_observed, reporter }))
        }
        TAG_INCONSISTENCY => {
            let count = r.u8()? as usize;
            if count < 2 {
                return Err(DecodeError::TooFewSths);
            }
            let sths = (0..count).map(|_| r.sth()).collect::<Result<Vec<_>, _>>()?;
            Message::Alert(AlertMessage::Inconsistency(InconsistencyMessage { sths }))
        }
        tag => return Err(DecodeError::UnknownTag(tag)),
    };
    r.finish()?;
    Ok(msg)
}

pub fn decode_sct(bytes: &[u8]) -> Result<SignedCertificateTimestamp, DecodeError> {
    let mut r = Reader { buf: bytes };
    let sct = r.sct()?;
    r.finish()?;
    Ok(sct)
}

/// Header value for `m`; `None` for the empty message (send no header).
pub fn encode_header(m: &Message) -> Option<String> {
    match m {
        Message::Empty => None,
        m => Some(STANDARD.encode(encode_message(m))),
    }
}

/// Missing header means an empty message.
pub fn decode_header(value: Option<&str>) -> Result<Message, DecodeError> {
    match value {
        None => Ok(Message::Empty),
        Some(v) => {
            let bytes = STANDARD.decode(v.trim()).map_err(|_| DecodeError::Base64)?;
            decode_message(&bytes)
        }
    }
}

pub fn encode_sct_header(sct: &SignedCertificateTimestamp) -> String {
    let mut out = Vec::new();
    encode_sct(sct, &mut out);
    STANDARD.encode(out)
}

pub fn decode_sct_header(value: &str) -> Result<SignedCertificateTimestamp, DecodeError> {
    let bytes = STANDARD.decode(value.trim()).map_err(|_| DecodeError::Base64)?;
    decode_sct(&bytes)
}
