//! Randomized exchanges against an honest log, with a share of peers that
//! send garbage, forged warnings and forged inconsistency claims.

use ct_gossip_core::anomaly::{
    verify_inconsistency, AlertMessage, Evidence, InconsistencyMessage, LogStatus, MonitorState, WarningMessage,
    WarningReason,
};
use ct_gossip_core::gossip::{ClientNode, Message, NodeConfig, NodeOutcome, Protocol, ServerNode, Session};
use ct_gossip_core::log::{LogConfig, LogService, PartyId, SignedCertificateTimestamp, SignedTreeHead};
use ct_gossip_core::merkle::{ConsistencyProof, Digest, InclusionProof};
use ct_gossip_core::wire;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MMD: u64 = 60_000;

#[derive(Debug, Default, Clone, Copy)]
pub struct SilenceReport {
    pub exchanges: usize,
    pub adversarial: usize,
    pub verified_inconsistencies: usize,
    pub warnings_raised: usize,
    pub status_changes: usize,
}

struct World {
    log: LogService,
    scts: Vec<SignedCertificateTimestamp>,
    now: u64,
    background: u64,
}

impl World {
    fn tick(&mut self, rng: &mut ChaCha8Rng) {
        self.now += rng.random_range(0..MMD / 40);
        self.log.set_time(self.now);
        if rng.random_bool(0.05) {
            let cert = format!("bg-{}", self.background);
            self.background += 1;
            self.log.submit(cert.as_bytes()).expect("honest log");
        }
        if self.now >= self.log.clock().next_boundary() {
            self.log.advance_mmd().expect("non-empty tree");
        }
    }

    fn sths(&self) -> &[SignedTreeHead] {
        self.log.published(PartyId::Anonymous)
    }
}

fn random_digest(rng: &mut ChaCha8Rng) -> Digest {
    let mut d = [0u8; 32];
    rng.fill_bytes(&mut d);
    Digest(d)
}

fn pick<'a, T>(items: &'a [T], rng: &mut ChaCha8Rng) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

fn forged_warning(world: &World, rng: &mut ChaCha8Rng) -> WarningMessage {
    let reasons = [
        WarningReason::LogUnresponsive,
        WarningReason::StaleSth,
        WarningReason::InvalidSignature,
        WarningReason::InvalidProof,
        WarningReason::SctNotIncluded,
    ];
    let sths = world.sths();
    let a = pick(sths, rng).clone();
    let b = pick(sths, rng).clone();
    let (first, second) = if a.tree_size <= b.tree_size { (a, b) } else { (b, a) };
    let sct = pick(&world.scts, rng).clone();
    let path = (0..rng.random_range(0..6)).map(|_| random_digest(rng)).collect();
    let evidence = match rng.random_range(0..5) {
        0 => None,
        1 => Some(Evidence::Sth(first)),
        2 => Some(Evidence::Sct(sct)),
        3 => Some(Evidence::Consistency {
            proof: ConsistencyProof { old_size: first.tree_size, new_size: second.tree_size, path },
            first,
            second,
        }),
        _ => Some(Evidence::Audit {
            proof: InclusionProof { leaf_index: rng.random_range(0..8), tree_size: second.tree_size, path },
            sth: second,
            sct,
        }),
    };
    WarningMessage { reason: *pick(&reasons, rng), evidence, first_observed: world.now, reporter: PartyId::Attacker }
}

fn forged_inconsistency(world: &World, rng: &mut ChaCha8Rng) -> InconsistencyMessage {
    let sths = world.sths();
    let mut picked: Vec<SignedTreeHead> = (0..rng.random_range(1..4)).map(|_| pick(sths, rng).clone()).collect();
    if rng.random_bool(0.5) {
        // a same-size twin with a made-up root and the original signature
        let mut twin = picked[0].clone();
        twin.root_hash = random_digest(rng);
        picked.push(twin);
    }
    InconsistencyMessage { sths: picked }
}

fn adversarial_message(world: &World, rng: &mut ChaCha8Rng) -> Message {
    match rng.random_range(0..4) {
        0 => {
            let mut raw = vec![0u8; rng.random_range(0..400)];
            rng.fill_bytes(&mut raw);
            wire::decode_message(&raw).unwrap_or(Message::Empty)
        }
        1 => {
            // a well-formed message with bytes flipped after the header
            let sth = pick(world.sths(), rng).clone();
            let mut raw = wire::encode_message(&Message::P1(ct_gossip_core::gossip::GossipMessageP1 { sth }));
            let i = rng.random_range(1..raw.len());
            raw[i] ^= 1 << rng.random_range(0..8);
            wire::decode_message(&raw).unwrap_or(Message::Empty)
        }
        2 => Message::Alert(forged_warning(world, rng).into()),
        _ => Message::Alert(forged_inconsistency(world, rng).into()),
    }
}

fn session_for<'s>(handle: &'s mut ct_gossip_core::log::LogHandle<'_>, world: &'s World, party: PartyId) -> Session<'s> {
    let config = NodeConfig { mmd_ms: MMD, retry_limit: 3, consent: false };
    Session::new(handle, world.log.verifier(), config, party, world.now)
}

fn account(out: &NodeOutcome, world: &World, monitor: &mut MonitorState, report: &mut SilenceReport) {
    if let Some(AlertMessage::Inconsistency(m)) = &out.raised {
        if verify_inconsistency(m, world.log.verifier()).is_ok() {
            report.verified_inconsistencies += 1;
        }
    }
    if matches!(out.raised, Some(AlertMessage::Warning(_))) {
        report.warnings_raised += 1;
    }
    for alert in &out.reports {
        if let AlertMessage::Inconsistency(m) = alert {
            if verify_inconsistency(m, world.log.verifier()).is_ok() {
                report.verified_inconsistencies += 1;
            }
        }
        let mut handle = world.log.handle(PartyId::Monitor);
        let mut s = session_for(&mut handle, world, PartyId::Monitor);
        let before = monitor.log_status;
        if monitor.receive(alert, &mut s) != before {
            report.status_changes += 1;
        }
    }
}

fn run_protocol(protocol: Protocol, exchanges: usize, seed: u64) -> SilenceReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = LogService::new(&LogConfig { key_seed: [3; 32], mmd_ms: MMD, start_ms: 0 });
    let scts: Vec<SignedCertificateTimestamp> =
        (0..8).map(|i| log.submit(format!("site-{i}").as_bytes()).expect("honest log")).collect();
    log.advance_mmd().expect("non-empty tree");
    let mut world = World { log, scts, now: MMD, background: 0 };

    let mut clients: Vec<ClientNode> = (0..40).map(|i| ClientNode::new(PartyId::Client(i), protocol, MMD)).collect();
    let mut servers: Vec<ServerNode> =
        (0..8).map(|i| ServerNode::new(PartyId::Server(i), protocol, 1000, MMD)).collect();
    let mut monitor = MonitorState::new(MMD);
    let mut report = SilenceReport::default();

    for _ in 0..exchanges {
        world.tick(&mut rng);
        let si = rng.random_range(0..servers.len());
        let ci = rng.random_range(0..clients.len());
        let attacker = rng.random_bool(0.25);
        let m1 = if attacker {
            report.adversarial += 1;
            adversarial_message(&world, &mut rng)
        } else {
            let m = clients[ci].get_message();
            wire::decode_message(&wire::encode_message(&m)).expect("own encoding decodes")
        };

        let server = &mut servers[si];
        let m2 = server.get_message(&m1, world.log.verifier());
        let out = {
            let mut handle = world.log.handle(server.id);
            let mut s = session_for(&mut handle, &world, server.id);
            server.update(&m1, &mut s)
        };
        account(&out, &world, &mut monitor, &mut report);

        if !attacker {
            let client = &mut clients[ci];
            let sct = world.scts[si].clone();
            let m2 = wire::decode_message(&wire::encode_message(&m2)).expect("own encoding decodes");
            let out = {
                let mut handle = world.log.handle(client.id);
                let mut s = session_for(&mut handle, &world, client.id);
                client.update(Some(&sct), &m2, &mut s)
            };
            account(&out, &world, &mut monitor, &mut report);
        }
        report.exchanges += 1;
    }
    if monitor.log_status != LogStatus::Trusted {
        report.status_changes = report.status_changes.max(1);
    }
    report
}

/// Splits `exchanges` evenly over both protocols.
pub fn honest_run(exchanges: usize, seed: u64) -> SilenceReport {
    let a = run_protocol(Protocol::SthOnly, exchanges / 2, seed);
    let b = run_protocol(Protocol::SthAndProof, exchanges - exchanges / 2, seed ^ 0x5eed);
    SilenceReport {
        exchanges: a.exchanges + b.exchanges,
        adversarial: a.adversarial + b.adversarial,
        verified_inconsistencies: a.verified_inconsistencies + b.verified_inconsistencies,
        warnings_raised: a.warnings_raised + b.warnings_raised,
        status_changes: a.status_changes + b.status_changes,
    }
}
