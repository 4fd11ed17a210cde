//! RFC 6962 Merkle tree over event leaf hashes.
//!
//! Nodes are addressed by `(level, index)`: level 0 holds leaves and node
//! `(l, i)` is the root of the perfect subtree over leaves `[i·2^l, (i+1)·2^l)`.
//! Only perfect subtrees are stored, so appends never overwrite a node and a
//! proof touches O(log n) stored nodes regardless of tree size.

mod checkpoint;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub use checkpoint::{Checkpoint, CheckpointSigner, NoteSignature, VerifierKey};

pub const LEAF_PREFIX: u8 = 0x00;
pub const NODE_PREFIX: u8 = 0x01;
pub const HASH_LEN: usize = 32;

/// A SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; HASH_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0; HASH_LEN]);

    pub fn sha256(data: &[u8]) -> Digest {
        Digest(Sha256::digest(data).into())
    }

    pub fn as_bytes(&self) -> &[u8; HASH_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        let mut out = [0u8; HASH_LEN];
        hex::decode_to_slice(s, &mut out).ok()?;
        Some(Digest(out))
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Digest> {
        Some(Digest(bytes.try_into().ok()?))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 64 lowercase hex chars"))
    }
}

/// `SHA-256(0x00 ∥ data)`.
pub fn leaf_hash(data: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update([LEAF_PREFIX]);
    h.update(data);
    Digest(h.finalize().into())
}

/// `SHA-256(0x01 ∥ left ∥ right)`.
pub fn node_hash(left: &Digest, right: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update([NODE_PREFIX]);
    h.update(left.0);
    h.update(right.0);
    Digest(h.finalize().into())
}

#[derive(Debug, Error)]
pub enum TlogError {
    #[error("index {index} out of range for tree size {size}")]
    OutOfRange { index: u64, size: u64 },
    #[error("tree node ({level}, {index}) missing from storage")]
    MissingNode { level: u32, index: u64 },
    #[error("tree node ({level}, {index}) already stored")]
    NodeExists { level: u32, index: u64 },
    #[error("tree storage: {0}")]
    Storage(String),
}

/// Read access to stored perfect-subtree nodes.
pub trait NodeStore {
    fn node(&self, level: u32, index: u64) -> Result<Option<Digest>, TlogError>;

    fn require(&self, level: u32, index: u64) -> Result<Digest, TlogError> {
        self.node(level, index)?
            .ok_or(TlogError::MissingNode { level, index })
    }
}

/// Write access. Implementations must refuse to overwrite an existing node.
pub trait NodeSink: NodeStore {
    fn put_node(&mut self, level: u32, index: u64, digest: Digest) -> Result<(), TlogError>;
}

/// In-memory tree state: leaf count plus the node map.
#[derive(Debug, Clone, Default)]
pub struct MemTree {
    size: u64,
    nodes: HashMap<(u32, u64), Digest>,
}

impl MemTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn append(&mut self, leaf: Digest) -> Result<u64, TlogError> {
        self.size = append(self, self.size, leaf)?;
        Ok(self.size)
    }

    pub fn root(&self) -> Result<Option<Digest>, TlogError> {
        root(self, self.size)
    }

    pub fn prove_inclusion(&self, leaf_index: u64) -> Result<InclusionProof, TlogError> {
        prove_inclusion(self, self.size, leaf_index)
    }

    pub fn prove_consistency(&self, old_size: u64) -> Result<ConsistencyProof, TlogError> {
        prove_consistency(self, old_size, self.size)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

impl NodeStore for MemTree {
    fn node(&self, level: u32, index: u64) -> Result<Option<Digest>, TlogError> {
        Ok(self.nodes.get(&(level, index)).copied())
    }
}

impl NodeSink for MemTree {
    fn put_node(&mut self, level: u32, index: u64, digest: Digest) -> Result<(), TlogError> {
        if self.nodes.insert((level, index), digest).is_some() {
            return Err(TlogError::NodeExists { level, index });
        }
        Ok(())
    }
}

/// Appends `leaf` to a tree of `size` leaves, writing the leaf and every
/// perfect subtree it completes. Returns the new size.
pub fn append<S: NodeSink + ?Sized>(store: &mut S, size: u64, leaf: Digest) -> Result<u64, TlogError> {
    store.put_node(0, size, leaf)?;
    let (mut level, mut index, mut cur) = (0u32, size, leaf);
    while index & 1 == 1 {
        let left = store.require(level, index - 1)?;
        cur = node_hash(&left, &cur);
        level += 1;
        index >>= 1;
        store.put_node(level, index, cur)?;
    }
    Ok(size + 1)
}

/// Merkle tree head for the first `size` leaves; `None` for the empty tree.
pub fn root<S: NodeStore + ?Sized>(store: &S, size: u64) -> Result<Option<Digest>, TlogError> {
    if size == 0 {
        return Ok(None);
    }
    subtree_hash(store, 0, size).map(Some)
}

/// Largest power of two strictly less than `n` (n ≥ 2).
fn split_point(n: u64) -> u64 {
    debug_assert!(n >= 2);
    1 << (63 - (n - 1).leading_zeros())
}

/// MTH over leaves `[start, end)`. Perfect aligned ranges are a single stored
/// node; anything else splits at the largest power of two below its width.
fn subtree_hash<S: NodeStore + ?Sized>(store: &S, start: u64, end: u64) -> Result<Digest, TlogError> {
    let n = end - start;
    if n.is_power_of_two() && start.is_multiple_of(n) {
        return store.require(n.trailing_zeros(), start >> n.trailing_zeros());
    }
    let k = split_point(n);
    let left = subtree_hash(store, start, start + k)?;
    let right = subtree_hash(store, start + k, end)?;
    Ok(node_hash(&left, &right))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionProof {
    pub leaf_index: u64,
    pub tree_size: u64,
    pub path: Vec<Digest>,
}

impl InclusionProof {
    /// Bytes of hash material carried by the proof.
    pub fn hash_bytes(&self) -> usize {
        self.path.len() * HASH_LEN
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyProof {
    pub old_size: u64,
    pub new_size: u64,
    pub path: Vec<Digest>,
}

pub fn prove_inclusion<S: NodeStore + ?Sized>(
    store: &S,
    tree_size: u64,
    leaf_index: u64,
) -> Result<InclusionProof, TlogError> {
    if leaf_index >= tree_size {
        return Err(TlogError::OutOfRange {
            index: leaf_index,
            size: tree_size,
        });
    }
    let mut path = Vec::new();
    inclusion_path(store, leaf_index, 0, tree_size, &mut path)?;
    Ok(InclusionProof {
        leaf_index,
        tree_size,
        path,
    })
}

fn inclusion_path<S: NodeStore + ?Sized>(
    store: &S,
    index: u64,
    start: u64,
    end: u64,
    out: &mut Vec<Digest>,
) -> Result<(), TlogError> {
    if end - start <= 1 {
        return Ok(());
    }
    let k = split_point(end - start);
    if index < start + k {
        inclusion_path(store, index, start, start + k, out)?;
        out.push(subtree_hash(store, start + k, end)?);
    } else {
        inclusion_path(store, index, start + k, end, out)?;
        out.push(subtree_hash(store, start, start + k)?);
    }
    Ok(())
}

pub fn prove_consistency<S: NodeStore + ?Sized>(
    store: &S,
    old_size: u64,
    new_size: u64,
) -> Result<ConsistencyProof, TlogError> {
    if old_size == 0 || old_size > new_size {
        return Err(TlogError::OutOfRange {
            index: old_size,
            size: new_size,
        });
    }
    let mut path = Vec::new();
    subproof(store, old_size, 0, new_size, true, &mut path)?;
    Ok(ConsistencyProof {
        old_size,
        new_size,
        path,
    })
}

fn subproof<S: NodeStore + ?Sized>(
    store: &S,
    m: u64,
    start: u64,
    end: u64,
    complete: bool,
    out: &mut Vec<Digest>,
) -> Result<(), TlogError> {
    let n = end - start;
    if m == n {
        if !complete {
            out.push(subtree_hash(store, start, end)?);
        }
        return Ok(());
    }
    let k = split_point(n);
    if m <= k {
        subproof(store, m, start, start + k, complete, out)?;
        out.push(subtree_hash(store, start + k, end)?);
    } else {
        subproof(store, m - k, start + k, end, false, out)?;
        out.push(subtree_hash(store, start, start + k)?);
    }
    Ok(())
}

/// Stateless inclusion check (RFC 9162 §2.1.3.2).
pub fn verify_inclusion(
    root: &Digest,
    tree_size: u64,
    leaf_index: u64,
    leaf: &Digest,
    proof: &InclusionProof,
) -> bool {
    if proof.tree_size != tree_size || proof.leaf_index != leaf_index || leaf_index >= tree_size {
        return false;
    }
    let (mut fnode, mut snode) = (leaf_index, tree_size - 1);
    let mut r = *leaf;
    for p in &proof.path {
        if snode == 0 {
            return false;
        }
        if fnode & 1 == 1 || fnode == snode {
            r = node_hash(p, &r);
            while fnode & 1 == 0 && fnode != 0 {
                fnode >>= 1;
                snode >>= 1;
            }
        } else {
            r = node_hash(&r, p);
        }
        fnode >>= 1;
        snode >>= 1;
    }
    snode == 0 && r == *root
}

/// Stateless consistency check (RFC 9162 §2.1.4.2).
pub fn verify_consistency(
    old_root: &Digest,
    old_size: u64,
    new_root: &Digest,
    new_size: u64,
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
    let mut path: Vec<Digest> = Vec::with_capacity(proof.path.len() + 1);
    if old_size.is_power_of_two() {
        path.push(*old_root);
    }
    path.extend_from_slice(&proof.path);
    let Some((first, rest)) = path.split_first() else {
        return false;
    };
    let (mut fnode, mut snode) = (old_size - 1, new_size - 1);
    while fnode & 1 == 1 {
        fnode >>= 1;
        snode >>= 1;
    }
    let (mut fr, mut sr) = (*first, *first);
    for c in rest {
        if snode == 0 {
            return false;
        }
        if fnode & 1 == 1 || fnode == snode {
            fr = node_hash(c, &fr);
            sr = node_hash(c, &sr);
            while fnode & 1 == 0 && fnode != 0 {
                fnode >>= 1;
                snode >>= 1;
            }
        } else {
            sr = node_hash(&sr, c);
        }
        fnode >>= 1;
        snode >>= 1;
    }
    snode == 0 && fr == *old_root && sr == *new_root
}
