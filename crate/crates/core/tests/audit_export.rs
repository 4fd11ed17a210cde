mod common;

use common::*;
use serde_json::json;
use sovereign_core::audit::{self, AuditPackage};
use sovereign_core::model::{ActionType, Event};
use sovereign_core::store::EventFilter;
use sovereign_core::tlog::{self, Checkpoint};
use sovereign_core::KernelError;

fn observe(fx: &mut Fx, n: usize) {
    for i in 0..n {
        fx.submit("root", ActionType::Observe, &format!("workspace/o{i}"), json!({"i": i}), None);
    }
}

fn check(pkg: &AuditPackage, fx: &Fx) {
    let cp = Checkpoint::parse(&pkg.checkpoint).unwrap();
    assert!(cp.verify(&fx.k.verifier_key()));
    let root = cp.root.unwrap();
    let lines: Vec<&str> = pkg.events_jsonl.lines().collect();
    assert_eq!(lines.len(), pkg.proofs.len());
    for (line, proof) in lines.iter().zip(&pkg.proofs) {
        let e: Event = serde_json::from_str(line).unwrap();
        assert_eq!(e.to_canonical_json().unwrap(), line.as_bytes());
        assert_eq!(proof.leaf_index, e.leaf_index());
        assert!(tlog::verify_inclusion(&root, cp.tree_size, proof.leaf_index, &e.compute_hash().unwrap(), proof));
    }
}

#[test]
fn full_log_export_verifies() {
    let mut fx = Fx::new();
    observe(&mut fx, 10);
    let pkg = audit::export_package(&mut fx.k, &EventFilter::default()).unwrap();
    assert_eq!(pkg.event_count(), 10);
    assert_eq!(pkg.proofs.len(), 10);
    assert!(pkg.prior_checkpoint.is_none());
    check(&pkg, &fx);
}

#[test]
fn subrange_is_proven_at_full_size_with_prior_link() {
    let mut fx = Fx::new();
    observe(&mut fx, 10);
    fx.k.publish_checkpoint().unwrap();
    observe(&mut fx, 5);
    let pkg = audit::export_package(&mut fx.k, &EventFilter::seq_range(3, 5)).unwrap();
    assert_eq!(pkg.proofs.len(), 3);
    assert!(pkg.proofs.iter().all(|p| p.tree_size == 15));
    check(&pkg, &fx);
    let prior = Checkpoint::parse(pkg.prior_checkpoint.as_deref().unwrap()).unwrap();
    let cur = Checkpoint::parse(&pkg.checkpoint).unwrap();
    let proof = pkg.consistency.as_ref().unwrap();
    assert_eq!((proof.old_size, proof.new_size), (10, 15));
    assert!(tlog::verify_consistency(&prior.root.unwrap(), 10, &cur.root.unwrap(), 15, proof));
}

#[test]
fn empty_range_is_not_found() {
    let mut fx = Fx::new();
    assert!(matches!(audit::export_package(&mut fx.k, &EventFilter::default()), Err(KernelError::NotFound(_))));
    observe(&mut fx, 3);
    let err = audit::export_package(&mut fx.k, &EventFilter::seq_range(7, 9)).unwrap_err();
    assert!(matches!(err, KernelError::NotFound(_)));
}

#[test]
fn package_round_trips_through_a_directory() {
    let mut fx = Fx::new();
    observe(&mut fx, 4);
    fx.k.publish_checkpoint().unwrap();
    observe(&mut fx, 2);
    let out = tempfile::tempdir().unwrap();
    let pkg = audit::export_to_dir(&mut fx.k, &EventFilter::default(), out.path()).unwrap();
    let read = |f: &str| std::fs::read_to_string(out.path().join(f)).unwrap();
    assert_eq!(read(audit::EVENTS_FILE), pkg.events_jsonl);
    assert_eq!(read(audit::CHECKPOINT_FILE), pkg.checkpoint);
    assert_eq!(read(audit::PRIOR_CHECKPOINT_FILE), pkg.prior_checkpoint.clone().unwrap());
    let proofs: Vec<tlog::InclusionProof> = serde_json::from_str(&read(audit::PROOFS_FILE)).unwrap();
    assert_eq!(proofs, pkg.proofs);
    // Proof JSON uses the documented shape.
    let raw: serde_json::Value = serde_json::from_str(&read(audit::PROOFS_FILE)).unwrap();
    assert_eq!(raw[0]["leaf_index"], json!(0));
    assert_eq!(raw[0]["tree_size"], json!(6));
    assert!(raw[0]["path"][0].as_str().unwrap().len() == 64);
}

#[test]
fn publishing_is_idempotent_and_monotone() {
    let mut fx = Fx::new();
    let empty = fx.k.publish_checkpoint().unwrap();
    assert_eq!((empty.tree_size, empty.root), (0, None));
    observe(&mut fx, 15);
    let a = fx.k.publish_checkpoint().unwrap();
    let b = fx.k.publish_checkpoint().unwrap();
    assert_eq!(a.tree_size, 15);
    assert_eq!(a.format(), b.format());
    let on_disk = std::fs::read_to_string(fx.dir.path().join("checkpoint")).unwrap();
    assert_eq!(on_disk, a.format());
    let sizes: Vec<u64> = fx.k.published_checkpoints().unwrap().iter().map(|(s, _)| *s).collect();
    assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(sizes, vec![0, 15]);
}

#[test]
fn filters_select_by_actor_prefix_and_time() {
    let mut fx = Fx::standard();
    let env = fx.docs_envelope(100);
    for i in 0..3 {
        fx.clock.advance_secs(1);
        fx.submit("bot1", ActionType::Mutate, &format!("workspace/docs/{i}"), json!({}), Some(&env));
    }
    let all = fx.events();
    let bot: Vec<u64> = fx
        .k
        .read_events(&EventFilter { actor: Some("bot1".into()), ..Default::default() })
        .unwrap()
        .iter()
        .map(|e| e.seq)
        .collect();
    assert_eq!(bot.len(), 3);
    assert!(bot.windows(2).all(|w| w[0] < w[1]));
    let ledger = fx
        .k
        .read_events(&EventFilter { target_prefix: Some("ledger/".into()), ..Default::default() })
        .unwrap();
    assert!(ledger.iter().all(|e| e.target.starts_with("ledger/")));
    let t = all[all.len() - 2].timestamp;
    let late = fx
        .k
        .read_events(&EventFilter { since: Some(t), ..Default::default() })
        .unwrap();
    assert_eq!(late.len(), 2);
    let everything = fx
        .k
        .read_events(&EventFilter { since: Some(0), until: Some(u64::MAX), ..Default::default() })
        .unwrap();
    assert_eq!(everything, all);
}
