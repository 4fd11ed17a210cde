//! RFC 6962 proof checking by structural recursion over the MTH split.

use sha2::{Digest, Sha256};

pub type Hash = [u8; 32];

pub fn leaf_hash(data: &[u8]) -> Hash {
    let mut h = Sha256::new();
    h.update([0u8]);
    h.update(data);
    h.finalize().into()
}

pub fn node_hash(l: &Hash, r: &Hash) -> Hash {
    let mut h = Sha256::new();
    h.update([1u8]);
    h.update(l);
    h.update(r);
    h.finalize().into()
}

/// Largest power of two strictly below `n`.
fn split(n: u64) -> u64 {
    let mut k = 1;
    while k * 2 < n {
        k *= 2;
    }
    k
}

/// Root implied by `leaf` at `index` in a tree of `size` with audit `path`
/// (leaf-side first). `None` if the path has the wrong shape.
fn implied_root(index: u64, size: u64, leaf: Hash, path: &[Hash]) -> Option<Hash> {
    if size == 1 {
        return path.is_empty().then_some(leaf);
    }
    let (sibling, rest) = path.split_last()?;
    let k = split(size);
    if index < k {
        Some(node_hash(&implied_root(index, k, leaf, rest)?, sibling))
    } else {
        Some(node_hash(sibling, &implied_root(index - k, size - k, leaf, rest)?))
    }
}

pub fn verify_inclusion(root: &Hash, size: u64, index: u64, leaf: &Hash, path: &[Hash]) -> bool {
    index < size && implied_root(index, size, *leaf, path).as_ref() == Some(root)
}

/// Rebuilds (old subtree hash, new subtree hash) from a SUBPROOF(m, n, b).
fn subproof_roots(m: u64, n: u64, complete: bool, old_root: &Hash, proof: &[Hash]) -> Option<(Hash, Hash)> {
    if m == n {
        return if complete {
            proof.is_empty().then_some((*old_root, *old_root))
        } else {
            match proof {
                [h] => Some((*h, *h)),
                _ => None,
            }
        };
    }
    let (last, rest) = proof.split_last()?;
    let k = split(n);
    if m <= k {
        let (old, new) = subproof_roots(m, k, complete, old_root, rest)?;
        Some((old, node_hash(&new, last)))
    } else {
        let (old, new) = subproof_roots(m - k, n - k, false, old_root, rest)?;
        Some((node_hash(last, &old), node_hash(last, &new)))
    }
}

pub fn verify_consistency(old_root: &Hash, old_size: u64, new_root: &Hash, new_size: u64, path: &[Hash]) -> bool {
    if old_size == 0 || old_size > new_size {
        return false;
    }
    match subproof_roots(old_size, new_size, true, old_root, path) {
        Some((old, new)) => &old == old_root && &new == new_root,
        None => false,
    }
}
