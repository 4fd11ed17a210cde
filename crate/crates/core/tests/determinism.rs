mod common;

use common::*;
use serde_json::json;
use sovereign_core::audit;
use sovereign_core::clock::{ManualClock, SeededIds};
use sovereign_core::config::KernelConfig;
use sovereign_core::envelope::HoldDecision;
use sovereign_core::model::{ActionType, ActorId};
use sovereign_core::store::{Durability, EventFilter};
use sovereign_core::{Kernel, KernelOptions};

fn session(id_seed: u64) -> (String, String, String) {
    let dir = tempfile::tempdir().unwrap();
    let clock = ManualClock::new(T0);
    let opts = KernelOptions::default()
        .clock(clock.clone())
        .ids(SeededIds::new(id_seed))
        .durability(Durability::Normal)
        .signing_seed([9; 32]);
    let k = Kernel::init(dir.path(), KernelConfig::default(), opts).unwrap();
    let mut fx = Fx { dir, k, clock };
    fx.k.register_actor(
        sovereign_core::model::ActorSpec::human("alice", entries(&["**:*"])),
        &ActorId::root(),
    )
    .unwrap();
    fx.k.register_actor(
        sovereign_core::model::ActorSpec::agent("bot1", "docs", entries(&["workspace/docs/*:mutate"])),
        &id("alice"),
    )
    .unwrap();
    let env = fx.held_envelope(1000, Some(60));
    for i in 0..5 {
        fx.clock.advance(1_000_000);
        fx.submit("bot1", ActionType::Mutate, &format!("workspace/docs/{i}"), json!({"n": i, "ü": "e\u{301}"}), Some(&env));
    }
    let pending: Vec<String> = fx.k.pending_holds().into_iter().map(|h| h.id).collect();
    fx.k.respond_hold(&pending[0], HoldDecision::Approve, &id("alice")).unwrap();
    fx.k.respond_hold(&pending[1], HoldDecision::Reject, &id("alice")).unwrap();
    fx.submit("alice", ActionType::Mutate, &format!("ledger/hold/{}", pending[2]), json!({"decision": "approve"}), None);
    fx.clock.advance_secs(61);
    fx.tick();
    let pkg = audit::export_package(&mut fx.k, &EventFilter::default()).unwrap();
    let root = fx.k.root().unwrap().unwrap().to_hex();
    (pkg.events_jsonl, root, pkg.checkpoint)
}

#[test]
fn identical_sessions_are_byte_identical() {
    let a = session(5);
    let b = session(5);
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
    assert!(a.0.lines().count() > 10);
    // NFC normalization happened before hashing.
    assert!(a.0.contains("\"é\"") || a.0.contains('\u{e9}'));
}

#[test]
fn different_id_seed_changes_the_log() {
    assert_ne!(session(5).1, session(6).1);
}
