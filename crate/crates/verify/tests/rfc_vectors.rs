//! The verifier's Merkle code against the shared RFC 6962 vectors, and
//! against a naive recursive transcription of the RFC's PATH and PROOF.

use proptest::prelude::*;
use serde_json::Value;
use sovereign_verify::merkle::{self, Hash};

fn vectors() -> Value {
    serde_json::from_str(include_str!("../../../testdata/rfc6962.json")).unwrap()
}

fn h(s: &Value) -> Hash {
    hex::decode(s.as_str().unwrap()).unwrap().try_into().unwrap()
}

fn path(v: &Value) -> Vec<Hash> {
    v.as_array().unwrap().iter().map(h).collect()
}

fn leaves(v: &Value) -> Vec<Hash> {
    v["leaves"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| merkle::leaf_hash(&hex::decode(l.as_str().unwrap()).unwrap()))
        .collect()
}

fn split(n: usize) -> usize {
    let mut k = 1;
    while k * 2 < n {
        k *= 2;
    }
    k
}

fn mth(d: &[Hash]) -> Hash {
    match d.len() {
        1 => d[0],
        n => {
            let k = split(n);
            merkle::node_hash(&mth(&d[..k]), &mth(&d[k..]))
        }
    }
}

fn audit_path(m: usize, d: &[Hash]) -> Vec<Hash> {
    if d.len() == 1 {
        return vec![];
    }
    let k = split(d.len());
    if m < k {
        let mut p = audit_path(m, &d[..k]);
        p.push(mth(&d[k..]));
        p
    } else {
        let mut p = audit_path(m - k, &d[k..]);
        p.push(mth(&d[..k]));
        p
    }
}

fn subproof(m: usize, d: &[Hash], complete: bool) -> Vec<Hash> {
    let n = d.len();
    if m == n {
        return if complete { vec![] } else { vec![mth(d)] };
    }
    let k = split(n);
    if m <= k {
        let mut p = subproof(m, &d[..k], complete);
        p.push(mth(&d[k..]));
        p
    } else {
        let mut p = subproof(m - k, &d[k..], false);
        p.push(mth(&d[..k]));
        p
    }
}

#[test]
fn roots_and_proofs_match_the_vectors() {
    let v = vectors();
    let d = leaves(&v);
    for r in v["roots"].as_array().unwrap() {
        let n = r["tree_size"].as_u64().unwrap() as usize;
        assert_eq!(mth(&d[..n]), h(&r["root"]), "root {n}");
    }
    for c in v["inclusion"].as_array().unwrap() {
        let (i, n) = (c["leaf_index"].as_u64().unwrap(), c["tree_size"].as_u64().unwrap());
        let root = mth(&d[..n as usize]);
        assert!(merkle::verify_inclusion(&root, n, i, &d[i as usize], &path(&c["path"])), "{i}@{n}");
    }
    for c in v["consistency"].as_array().unwrap() {
        let (m, n) = (c["old_size"].as_u64().unwrap(), c["new_size"].as_u64().unwrap());
        let (a, b) = (mth(&d[..m as usize]), mth(&d[..n as usize]));
        assert!(merkle::verify_consistency(&a, m, &b, n, &path(&c["path"])), "{m}->{n}");
    }
}

#[test]
fn wrong_leaf_or_index_fails() {
    let v = vectors();
    let d = leaves(&v);
    let root = mth(&d);
    let p = audit_path(3, &d);
    assert!(merkle::verify_inclusion(&root, 8, 3, &d[3], &p));
    assert!(!merkle::verify_inclusion(&root, 8, 4, &d[3], &p));
    assert!(!merkle::verify_inclusion(&root, 8, 3, &d[4], &p));
    assert!(!merkle::verify_inclusion(&root, 9, 3, &d[3], &p));
    assert!(!merkle::verify_inclusion(&root, 8, 8, &d[3], &p));
}

fn tree(n: usize) -> Vec<Hash> {
    (0..n).map(|i| merkle::leaf_hash(&(i as u64).to_be_bytes())).collect()
}

proptest! {
    #[test]
    fn naive_inclusion_paths_verify(n in 1usize..200, seed in any::<usize>()) {
        let d = tree(n);
        let m = seed % n;
        let root = mth(&d);
        let p = audit_path(m, &d);
        prop_assert!(merkle::verify_inclusion(&root, n as u64, m as u64, &d[m], &p));
        if !p.is_empty() {
            let mut bad = p.clone();
            bad[seed % p.len()][0] ^= 1;
            prop_assert!(!merkle::verify_inclusion(&root, n as u64, m as u64, &d[m], &bad));
        }
    }

    #[test]
    fn naive_consistency_proofs_verify(n in 2usize..200, seed in any::<usize>()) {
        let d = tree(n);
        let m = 1 + seed % (n - 1);
        let (a, b) = (mth(&d[..m]), mth(&d));
        let p = subproof(m, &d, true);
        prop_assert!(merkle::verify_consistency(&a, m as u64, &b, n as u64, &p));
        let forked = merkle::leaf_hash(b"fork");
        let mut e = d.clone();
        e[m - 1] = forked;
        prop_assert!(!merkle::verify_consistency(&mth(&e[..m]), m as u64, &b, n as u64, &p));
    }
}
