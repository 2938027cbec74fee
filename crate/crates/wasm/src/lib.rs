//! Browser bindings for the demo page in `www/`. Every export takes plain
//! numbers or strings and returns a JSON string; the page does the drawing.

use ct_gossip_core::gossip::Protocol;
use ct_gossip_core::merkle::{verify_consistency, verify_inclusion, ChronTree, Sha256Hasher};
use ct_gossip_core::sim::{self, AttackKind, AttackSpec, NbParams, Scenario, SimProtocol};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn short(hex: String) -> String {
    hex[..16].to_string()
}

/// Inclusion proof for `index` and consistency proof from `old_size`, both
/// against the tree over the first `size` leaves (one leaf per line).
pub fn merkle_json(leaves: &str, index: u64, old_size: u64, size: u64) -> Result<Value, String> {
    let leaves: Vec<&str> = leaves.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if leaves.is_empty() {
        return Err("enter at least one leaf".into());
    }
    let tree = ChronTree::<Sha256Hasher>::from_leaves(leaves.iter().map(|l| l.as_bytes()));
    let size = size.clamp(1, leaves.len() as u64);
    let old_size = old_size.clamp(1, size);
    let root = tree.root(size).map_err(|e| e.to_string())?;
    let inclusion = tree.inclusion_proof(index, size).map_err(|e| e.to_string())?;
    let leaf = tree.leaf_digest(index).filter(|_| index < size).ok_or("leaf index outside the tree")?;
    let consistency = tree.consistency_proof(old_size, size).map_err(|e| e.to_string())?;
    let old_root = tree.root(old_size).map_err(|e| e.to_string())?;
    Ok(json!({
        "size": size,
        "root": root.to_hex(),
        "leaves": (0..size).map(|i| short(tree.leaf_digest(i).expect("in range").to_hex())).collect::<Vec<_>>(),
        "inclusion": {
            "index": index,
            "path": inclusion.path.iter().map(|d| short(d.to_hex())).collect::<Vec<_>>(),
            "verifies": verify_inclusion(&leaf, &inclusion, &root),
        },
        "consistency": {
            "old_size": old_size,
            "old_root": old_root.to_hex(),
            "path": consistency.path.iter().map(|d| short(d.to_hex())).collect::<Vec<_>>(),
            "verifies": verify_consistency(old_size, &old_root, size, &root, &consistency),
        },
    }))
}

/// Histogram of `draws` connection counts from NB(r, p).
pub fn nb_json(r: f64, p: f64, draws: u32, seed: u64) -> Result<Value, String> {
    let params = NbParams { r, p };
    if !params.is_valid() {
        return Err("need r > 0 and 0 < p < 1".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<u64> = (0..draws.max(1)).map(|_| sim::sample_connection_count(params, &mut rng)).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<u64>() as f64 / n;
    let var = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let top = (params.mean() + 4.0 * params.variance().sqrt()).ceil() as usize;
    let mut counts = vec![0u64; top + 2];
    for x in xs {
        counts[(x as usize).min(top + 1)] += 1;
    }
    Ok(json!({
        "counts": counts,
        "sample_mean": mean,
        "sample_variance": var,
        "mean": params.mean(),
        "variance": params.variance(),
    }))
}

/// A shrunken desk scenario: `clients` per country, `days` long, with or
/// without a split-world attack on the first three gossiping clients.
pub fn simulate_json(protocol: &str, clients: u32, days: f64, seed: u64, attack: bool) -> Result<Value, String> {
    let mut s = Scenario::desk_default();
    s.name = "browser".into();
    s.protocol = protocol.parse::<SimProtocol>().map_err(|e| e.to_string())?;
    s.seed = seed;
    s.duration_days = days;
    for c in &mut s.countries {
        c.client_count = clients;
    }
    s.attack = attack.then(|| AttackSpec {
        kind: AttackKind::SplitWorldTargeted { victims: (0..3).collect() },
        start_day: (days / 3.0).max(0.5).min(days),
    });
    s.validate().map_err(|e| e.to_string())?;
    let r = sim::run(&s);
    Ok(json!({
        "summary": r.summary,
        "latest_fraction": r.rows.iter().map(|row| row.latest_fraction()).collect::<Vec<_>>(),
        "gossip_queries": r.rows.iter().map(|row| row.gossip_consistency_queries()).collect::<Vec<_>>(),
        "detected": sim::detected(&r),
    }))
}

fn to_js(v: Result<Value, String>) -> Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn merkle(leaves: &str, index: u32, old_size: u32, size: u32) -> Result<String, JsError> {
    to_js(merkle_json(leaves, index as u64, old_size as u64, size as u64))
}

#[wasm_bindgen]
pub fn nb_histogram(r: f64, p: f64, draws: u32, seed: u32) -> Result<String, JsError> {
    to_js(nb_json(r, p, draws, seed as u64))
}

#[wasm_bindgen]
pub fn simulate(protocol: &str, clients: u32, days: f64, seed: u32, attack: bool) -> Result<String, JsError> {
    to_js(simulate_json(protocol, clients, days, seed as u64, attack))
}

#[wasm_bindgen]
pub fn protocols() -> String {
    let all = [
        SimProtocol::Gossip(Protocol::SthOnly),
        SimProtocol::Gossip(Protocol::SthAndProof),
        SimProtocol::NoneSaveScts,
        SimProtocol::NoneNoSave,
    ];
    json!(all.iter().map(|p| p.to_string()).collect::<Vec<_>>()).to_string()
}
