//! Append-only binary Merkle tree over chronologically ordered leaves.
//!
//! Hashing follows RFC 6962: leaves are hashed as `H(0x00 || data)`,
//! interior nodes as `H(0x01 || left || right)`, and a tree of `n > 1`
//! leaves splits at the largest power of two strictly less than `n`.
//! Proof paths are ordered leaf-to-root.

use std::fmt;
use std::marker::PhantomData;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Sha256, Sha512_256};
use thiserror::Error;

pub const DIGEST_LEN: usize = 32;

const LEAF_PREFIX: u8 = 0x00;
const NODE_PREFIX: u8 = 0x01;

/// A 32-byte hash output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn from_slice(bytes: &[u8]) -> Option<Digest> {
        <[u8; DIGEST_LEN]>::try_from(bytes).ok().map(Digest)
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        hex::decode(s).ok().and_then(|b| Digest::from_slice(&b))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Digest::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 64 hex characters"))
    }
}

/// Hash function used for leaves and interior nodes.
pub trait TreeHasher {
    fn hash_leaf(data: &[u8]) -> Digest;
    fn hash_children(left: &Digest, right: &Digest) -> Digest;
}

fn hash_parts<D: sha2::Digest>(parts: &[&[u8]]) -> Digest {
    let mut hasher = D::new();
    for part in parts {
        hasher.update(part);
    }
    Digest::from_slice(&hasher.finalize()).expect("256-bit hash")
}

/// SHA-256, the default.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sha256Hasher;

impl TreeHasher for Sha256Hasher {
    fn hash_leaf(data: &[u8]) -> Digest {
        hash_parts::<Sha256>(&[&[LEAF_PREFIX], data])
    }

    fn hash_children(left: &Digest, right: &Digest) -> Digest {
        hash_parts::<Sha256>(&[&[NODE_PREFIX], &left.0, &right.0])
    }
}

/// SHA-512/256.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sha512_256Hasher;

impl TreeHasher for Sha512_256Hasher {
    fn hash_leaf(data: &[u8]) -> Digest {
        hash_parts::<Sha512_256>(&[&[LEAF_PREFIX], data])
    }

    fn hash_children(left: &Digest, right: &Digest) -> Digest {
        hash_parts::<Sha512_256>(&[&[NODE_PREFIX], &left.0, &right.0])
    }
}

/// `SHA-256(0x00 || data)`
pub fn leaf_hash(data: &[u8]) -> Digest {
    Sha256Hasher::hash_leaf(data)
}

/// `SHA-256(0x01 || left || right)`
pub fn node_hash(left: &Digest, right: &Digest) -> Digest {
    Sha256Hasher::hash_children(left, right)
}

/// Plain SHA-256 over arbitrary bytes (no domain prefix).
pub fn sha256(data: &[u8]) -> Digest {
    hash_parts::<Sha256>(&[data])
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MerkleError {
    #[error("tree size {requested} out of range (tree has {available} leaves)")]
    SizeOutOfRange { requested: u64, available: u64 },
    #[error("leaf index {index} out of range for tree size {size}")]
    IndexOutOfRange { index: u64, size: u64 },
    #[error("consistency proof requires 0 < old_size ({old}) <= new_size ({new})")]
    BadSizePair { old: u64, new: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionProof {
    pub leaf_index: u64,
    pub tree_size: u64,
    pub path: Vec<Digest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConsistencyProof {
    pub old_size: u64,
    pub new_size: u64,
    pub path: Vec<Digest>,
}

/// Largest power of two strictly less than `n` (`n >= 2`).
fn split_point(n: u64) -> u64 {
    debug_assert!(n >= 2);
    1 << (63 - (n - 1).leading_zeros())
}

/// Append-only Merkle tree (a "ChronTree").
///
/// Hashes of every complete, aligned power-of-two subtree are cached, so a
/// root or proof over any prefix costs `O(log^2 n)` hash operations.
#[derive(Clone)]
pub struct ChronTree<H: TreeHasher = Sha256Hasher> {
    leaves: Vec<Vec<u8>>,
    // levels[k][i] = hash of leaves [i * 2^k, (i + 1) * 2^k)
    levels: Vec<Vec<Digest>>,
    _hasher: PhantomData<H>,
}

impl<H: TreeHasher> Default for ChronTree<H> {
    fn default() -> Self {
        ChronTree { leaves: Vec::new(), levels: vec![Vec::new()], _hasher: PhantomData }
    }
}

impl<H: TreeHasher> fmt::Debug for ChronTree<H> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChronTree").field("size", &self.size()).finish()
    }
}

impl<H: TreeHasher> ChronTree<H> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_leaves<I, L>(leaves: I) -> Self
    where
        I: IntoIterator<Item = L>,
        L: AsRef<[u8]>,
    {
        let mut tree = Self::new();
        for leaf in leaves {
            tree.append(leaf.as_ref());
        }
        tree
    }

    pub fn size(&self) -> u64 {
        self.leaves.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn leaf(&self, index: u64) -> Option<&[u8]> {
        self.leaves.get(index as usize).map(Vec::as_slice)
    }

    pub fn leaf_digest(&self, index: u64) -> Option<Digest> {
        self.levels[0].get(index as usize).copied()
    }

    /// Appends a leaf and returns its index.
    pub fn append(&mut self, data: &[u8]) -> u64 {
        let index = self.size();
        self.leaves.push(data.to_vec());
        self.levels[0].push(H::hash_leaf(data));
        let mut level = 0;
        while self.levels[level].len() % 2 == 0 {
            let nodes = &self.levels[level];
            let parent = H::hash_children(&nodes[nodes.len() - 2], &nodes[nodes.len() - 1]);
            if self.levels.len() == level + 1 {
                self.levels.push(Vec::new());
            }
            self.levels[level + 1].push(parent);
            level += 1;
        }
        index
    }

    fn check_size(&self, size: u64) -> Result<(), MerkleError> {
        if size == 0 || size > self.size() {
            return Err(MerkleError::SizeOutOfRange { requested: size, available: self.size() });
        }
        Ok(())
    }

    /// Hash of the subtree over leaves `[start, end)`.
    fn subtree(&self, start: u64, end: u64) -> Digest {
        let width = end - start;
        debug_assert!(width >= 1);
        if width.is_power_of_two() && start % width == 0 {
            let level = width.trailing_zeros() as usize;
            return self.levels[level][(start >> level) as usize];
        }
        let k = split_point(width);
        H::hash_children(&self.subtree(start, start + k), &self.subtree(start + k, end))
    }

    /// Root over the first `size` leaves.
    pub fn root(&self, size: u64) -> Result<Digest, MerkleError> {
        self.check_size(size)?;
        Ok(self.subtree(0, size))
    }

    pub fn inclusion_proof(&self, leaf_index: u64, size: u64) -> Result<InclusionProof, MerkleError> {
        self.check_size(size)?;
        if leaf_index >= size {
            return Err(MerkleError::IndexOutOfRange { index: leaf_index, size });
        }
        let mut path = Vec::new();
        self.inclusion_path(leaf_index, 0, size, &mut path);
        Ok(InclusionProof { leaf_index, tree_size: size, path })
    }

    fn inclusion_path(&self, m: u64, start: u64, end: u64, path: &mut Vec<Digest>) {
        let n = end - start;
        if n == 1 {
            return;
        }
        let k = split_point(n);
        if m < k {
            self.inclusion_path(m, start, start + k, path);
            path.push(self.subtree(start + k, end));
        } else {
            self.inclusion_path(m - k, start + k, end, path);
            path.push(self.subtree(start, start + k));
        }
    }

    pub fn consistency_proof(&self, old_size: u64, new_size: u64) -> Result<ConsistencyProof, MerkleError> {
        if old_size == 0 || old_size > new_size {
            return Err(MerkleError::BadSizePair { old: old_size, new: new_size });
        }
        self.check_size(new_size)?;
        let mut path = Vec::new();
        if old_size < new_size {
            self.consistency_path(old_size, 0, new_size, true, &mut path);
        }
        Ok(ConsistencyProof { old_size, new_size, path })
    }

    fn consistency_path(&self, m: u64, start: u64, end: u64, complete: bool, path: &mut Vec<Digest>) {
        let n = end - start;
        if m == n {
            if !complete {
                path.push(self.subtree(start, end));
            }
            return;
        }
        let k = split_point(n);
        if m <= k {
            self.consistency_path(m, start, start + k, complete, path);
            path.push(self.subtree(start + k, end));
        } else {
            self.consistency_path(m - k, start + k, end, false, path);
            path.push(self.subtree(start, start + k));
        }
    }
}

/// Checks an inclusion proof for `leaf_digest` against `root`.
pub fn verify_inclusion(leaf_digest: &Digest, proof: &InclusionProof, root: &Digest) -> bool {
    verify_inclusion_with::<Sha256Hasher>(leaf_digest, proof, root)
}

pub fn verify_inclusion_with<H: TreeHasher>(leaf_digest: &Digest, proof: &InclusionProof, root: &Digest) -> bool {
    if proof.leaf_index >= proof.tree_size {
        return false;
    }
    let mut node = proof.leaf_index;
    let mut last = proof.tree_size - 1;
    let mut acc = *leaf_digest;
    for sibling in &proof.path {
        if last == 0 {
            return false;
        }
        if node & 1 == 1 || node == last {
            acc = H::hash_children(sibling, &acc);
            if node & 1 == 0 {
                while node & 1 == 0 && node != 0 {
                    node >>= 1;
                    last >>= 1;
                }
            }
        } else {
            acc = H::hash_children(&acc, sibling);
        }
        node >>= 1;
        last >>= 1;
    }
    last == 0 && acc == *root
}

/// Checks that `new_root` (over `new_size` leaves) extends `old_root`.
pub fn verify_consistency(
    old_size: u64,
    old_root: &Digest,
    new_size: u64,
    new_root: &Digest,
    proof: &ConsistencyProof,
) -> bool {
    verify_consistency_with::<Sha256Hasher>(old_size, old_root, new_size, new_root, proof)
}

pub fn verify_consistency_with<H: TreeHasher>(
    old_size: u64,
    old_root: &Digest,
    new_size: u64,
    new_root: &Digest,
    proof: &ConsistencyProof,
) -> bool {
    if proof.old_size != old_size || proof.new_size != new_size {
        return false;
    }
    if old_size == 0 || old_size > new_size {
        return false;
    }
    if old_size == new_size {
        return proof.path.is_empty() && old_root == new_root;
    }
    if proof.path.is_empty() {
        return false;
    }

    let mut path = proof.path.iter();
    let seed = if old_size.is_power_of_two() {
        *old_root
    } else {
        *path.next().expect("non-empty")
    };
    let mut node = old_size - 1;
    let mut last = new_size - 1;
    while node & 1 == 1 {
        node >>= 1;
        last >>= 1;
    }
    let mut old_acc = seed;
    let mut new_acc = seed;
    for sibling in path {
        if last == 0 {
            return false;
        }
        if node & 1 == 1 || node == last {
            old_acc = H::hash_children(sibling, &old_acc);
            new_acc = H::hash_children(sibling, &new_acc);
            if node & 1 == 0 {
                while node & 1 == 0 && node != 0 {
                    node >>= 1;
                    last >>= 1;
                }
            }
        } else {
            new_acc = H::hash_children(&new_acc, sibling);
        }
        node >>= 1;
        last >>= 1;
    }
    last == 0 && old_acc == *old_root && new_acc == *new_root
}
