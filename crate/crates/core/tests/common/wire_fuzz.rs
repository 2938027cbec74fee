//! Round trips over a generated corpus of every message kind, then random
//! and mutated inputs to the decoders.

use std::panic::{catch_unwind, AssertUnwindSafe};

use ct_gossip_core::anomaly::{AlertMessage, Evidence, InconsistencyMessage, WarningMessage, WarningReason};
use ct_gossip_core::gossip::{GossipMessageP1, GossipMessageP2, Message};
use ct_gossip_core::log::{LogKey, PartyId, SignedCertificateTimestamp, SignedTreeHead};
use ct_gossip_core::merkle::{ChronTree, ConsistencyProof, Digest, InclusionProof};
use ct_gossip_core::wire;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn digest(rng: &mut ChaCha8Rng) -> Digest {
    let mut d = [0u8; 32];
    rng.fill_bytes(&mut d);
    Digest(d)
}

fn sth(key: &LogKey, rng: &mut ChaCha8Rng) -> SignedTreeHead {
    key.sign_tree_head(rng.random_range(1..1 << 40), rng.random(), digest(rng))
}

fn sct(key: &LogKey, rng: &mut ChaCha8Rng) -> SignedCertificateTimestamp {
    key.sign_certificate(digest(rng), rng.random())
}

fn path(rng: &mut ChaCha8Rng) -> Vec<Digest> {
    (0..rng.random_range(0..40)).map(|_| digest(rng)).collect()
}

fn party(rng: &mut ChaCha8Rng) -> PartyId {
    match rng.random_range(0..5) {
        0 => PartyId::Client(rng.random()),
        1 => PartyId::Server(rng.random()),
        2 => PartyId::Monitor,
        3 => PartyId::Attacker,
        _ => PartyId::Anonymous,
    }
}

fn evidence(key: &LogKey, rng: &mut ChaCha8Rng) -> Option<Evidence> {
    match rng.random_range(0..5) {
        0 => None,
        1 => Some(Evidence::Sth(sth(key, rng))),
        2 => Some(Evidence::Consistency {
            first: sth(key, rng),
            second: sth(key, rng),
            proof: ConsistencyProof { old_size: rng.random(), new_size: rng.random(), path: path(rng) },
        }),
        3 => Some(Evidence::Audit {
            sth: sth(key, rng),
            sct: sct(key, rng),
            proof: InclusionProof { leaf_index: rng.random(), tree_size: rng.random(), path: path(rng) },
        }),
        _ => Some(Evidence::Sct(sct(key, rng))),
    }
}

/// `per_kind` messages of each kind: empty, P1, P2, warning, inconsistency.
pub fn corpus(per_kind: usize, seed: u64) -> Vec<Message> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key = LogKey::from_seed([9; 32]);
    let reasons = [
        WarningReason::LogUnresponsive,
        WarningReason::StaleSth,
        WarningReason::InvalidSignature,
        WarningReason::InvalidProof,
        WarningReason::SctNotIncluded,
    ];
    let mut out = vec![Message::Empty];
    for i in 0..per_kind {
        out.push(Message::P1(GossipMessageP1 { sth: sth(&key, &mut rng) }));
        let (a, b) = (sth(&key, &mut rng), sth(&key, &mut rng));
        let (a, b) = match a.tree_size.cmp(&b.tree_size) {
            std::cmp::Ordering::Less => (a, b),
            std::cmp::Ordering::Greater => (b, a),
            std::cmp::Ordering::Equal => (key.sign_tree_head(a.tree_size - 1, a.timestamp, a.root_hash), b),
        };
        let proof = ConsistencyProof { old_size: a.tree_size, new_size: b.tree_size, path: path(&mut rng) };
        out.push(Message::P2(GossipMessageP2 { sth_a: a, sth_b: b, proof }));
        out.push(Message::Alert(AlertMessage::Warning(WarningMessage {
            reason: reasons[i % reasons.len()],
            evidence: evidence(&key, &mut rng),
            first_observed: rng.random(),
            reporter: party(&mut rng),
        })));
        let n = rng.random_range(2..6);
        out.push(Message::Alert(AlertMessage::Inconsistency(InconsistencyMessage {
            sths: (0..n).map(|_| sth(&key, &mut rng)).collect(),
        })));
    }
    out
}

/// Every corpus entry survives bytes and header encodings unchanged.
pub fn check_round_trips(messages: &[Message]) -> Result<usize, String> {
    for (i, m) in messages.iter().enumerate() {
        let bytes = wire::encode_message(m);
        let back = wire::decode_message(&bytes).map_err(|e| format!("entry {i}: {e}"))?;
        if &back != m {
            return Err(format!("entry {i} changed in a byte round trip"));
        }
        let header = wire::encode_header(m);
        if m.is_empty() != header.is_none() {
            return Err(format!("entry {i}: header presence does not match emptiness"));
        }
        let back = wire::decode_header(header.as_deref()).map_err(|e| format!("entry {i}: {e}"))?;
        if &back != m {
            return Err(format!("entry {i} changed in a header round trip"));
        }
    }
    Ok(messages.len())
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FuzzReport {
    pub inputs: usize,
    pub decoded: usize,
    pub crashes: usize,
    pub unstable: usize,
}

/// Random bytes, random header strings, and bit-flipped / truncated /
/// extended copies of valid encodings. Anything that decodes must
/// re-encode to something that decodes to the same value.
pub fn fuzz(inputs: usize, seed: u64) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<Vec<u8>> = corpus(50, seed ^ 0xc0ffee).iter().map(wire::encode_message).collect();
    let mut report = FuzzReport::default();
    let mut buf = Vec::new();
    for i in 0..inputs {
        buf.clear();
        match i % 4 {
            0 => {
                buf.resize(rng.random_range(0..300), 0);
                rng.fill_bytes(&mut buf);
                if !buf.is_empty() && rng.random_bool(0.5) {
                    buf[0] = rng.random_range(1..5);
                }
            }
            1 => {
                buf.extend_from_slice(&seeds[rng.random_range(0..seeds.len())]);
                for _ in 0..rng.random_range(1..4) {
                    if buf.is_empty() {
                        break;
                    }
                    let j = rng.random_range(0..buf.len());
                    buf[j] ^= 1 << rng.random_range(0..8);
                }
            }
            2 => {
                buf.extend_from_slice(&seeds[rng.random_range(0..seeds.len())]);
                let cut = rng.random_range(0..=buf.len());
                buf.truncate(cut);
                if rng.random_bool(0.3) {
                    buf.push(rng.random());
                }
            }
            _ => {
                let len = rng.random_range(0..200);
                let s: String = (0..len).map(|_| rng.random_range(0x20u8..0x7f) as char).collect();
                report.inputs += 1;
                if catch_unwind(|| {
                    let _ = wire::decode_header(Some(&s));
                    let _ = wire::decode_sct_header(&s);
                })
                .is_err()
                {
                    report.crashes += 1;
                }
                continue;
            }
        }
        report.inputs += 1;
        let outcome = catch_unwind(AssertUnwindSafe(|| {
            let _ = wire::decode_sct(&buf);
            wire::decode_message(&buf).ok().map(|m| (wire::decode_message(&wire::encode_message(&m)).ok(), m))
        }));
        match outcome {
            Err(_) => report.crashes += 1,
            Ok(Some((again, m))) => {
                report.decoded += 1;
                if again.as_ref() != Some(&m) {
                    report.unstable += 1;
                }
            }
            Ok(None) => {}
        }
    }
    report
}

/// Encoded size of a P2 message whose proof has the longest path possible
/// for trees up to `max_size` leaves.
pub fn worst_p2_size(max_size: u64) -> usize {
    let key = LogKey::from_seed([9; 32]);
    let depth = 64 - (max_size - 1).leading_zeros() as usize;
    let tree = ChronTree::<ct_gossip_core::merkle::Sha256Hasher>::from_leaves((0..3u32).map(|i| i.to_be_bytes()));
    let root = tree.root(3).expect("three leaves");
    let proof = ConsistencyProof { old_size: 1, new_size: max_size, path: vec![root; depth + 1] };
    let m = Message::P2(GossipMessageP2 {
        sth_a: key.sign_tree_head(1, 0, root),
        sth_b: key.sign_tree_head(max_size, 0, root),
        proof,
    });
    wire::encode_message(&m).len()
}
