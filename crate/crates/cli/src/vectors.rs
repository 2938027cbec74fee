//! Golden vectors over the six-certificate example tree.

use serde::Serialize;

use ct_gossip_core::merkle::{node_hash, ChronTree, Digest};

#[derive(Debug, Clone, Serialize)]
pub struct NamedDigest {
    pub name: String,
    pub hex: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProofVector {
    pub call: String,
    pub path: Vec<NamedDigest>,
    pub root: NamedDigest,
}

#[derive(Debug, Clone, Serialize)]
pub struct Vectors {
    pub leaves: Vec<String>,
    pub nodes: Vec<NamedDigest>,
    pub inclusion: ProofVector,
    pub consistency: ProofVector,
}

pub fn example_tree() -> Vectors {
    let leaves = ["C1", "C2", "C3", "C4", "C5", "C6"];
    let tree = ChronTree::<ct_gossip_core::merkle::Sha256Hasher>::from_leaves(leaves);
    let h: Vec<Digest> = (0..6).map(|i| tree.leaf_digest(i).expect("six leaves")).collect();
    let h12 = node_hash(&h[0], &h[1]);
    let h34 = node_hash(&h[2], &h[3]);
    let h56 = node_hash(&h[4], &h[5]);
    let h1234 = node_hash(&h12, &h34);
    let h123456 = node_hash(&h1234, &h56);

    let mut table: Vec<(String, Digest)> = (0..6).map(|i| (format!("h{}", i + 1), h[i])).collect();
    table.extend([
        ("h12".to_string(), h12),
        ("h34".to_string(), h34),
        ("h56".to_string(), h56),
        ("h1234".to_string(), h1234),
        ("h123456".to_string(), h123456),
    ]);
    let name = |d: &Digest| -> NamedDigest {
        let n = table.iter().find(|(_, x)| x == d).map_or("?".to_string(), |(n, _)| n.clone());
        NamedDigest { name: n, hex: d.to_hex() }
    };

    let inclusion = tree.inclusion_proof(3, 6).expect("in range");
    let consistency = tree.consistency_proof(4, 6).expect("in range");
    assert_eq!(tree.root(4).expect("in range"), h1234);
    assert_eq!(tree.root(6).expect("in range"), h123456);
    Vectors {
        leaves: leaves.iter().map(|s| s.to_string()).collect(),
        nodes: table.iter().map(|(_, d)| name(d)).collect(),
        inclusion: ProofVector {
            call: "inclusion_proof(3, 6)".into(),
            path: inclusion.path.iter().map(&name).collect(),
            root: name(&h123456),
        },
        consistency: ProofVector {
            call: "consistency_proof(4, 6)".into(),
            path: consistency.path.iter().map(&name).collect(),
            root: name(&h123456),
        },
    }
}

pub fn render_text(v: &Vectors) -> String {
    let mut out = format!("leaves: {}\n", v.leaves.join(" "));
    for n in &v.nodes {
        out.push_str(&format!("{:<8} {}\n", n.name, n.hex));
    }
    for p in [&v.inclusion, &v.consistency] {
        let names: Vec<&str> = p.path.iter().map(|n| n.name.as_str()).collect();
        out.push_str(&format!("{} = [{}] -> {}\n", p.call, names.join(", "), p.root.name));
    }
    out
}
