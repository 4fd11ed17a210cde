//! Durability: clean reopen, abort mid-transaction, and SIGKILL during a
//! commit loop. The crash cases re-run this test binary as a child process.

mod common;

use std::path::Path;
use std::process::Command;

use common::*;
use serde_json::json;
use sovereign_core::clock::{ManualClock, SeededIds};
use sovereign_core::config::KernelConfig;
use sovereign_core::kernel::recompute_root;
use sovereign_core::model::{ActionType, ActorId};
use sovereign_core::store::{Durability, Store};
use sovereign_core::{Kernel, KernelOptions};

const CHILD_ENV: &str = "KERNEL_CRASH_CHILD";

fn full_opts() -> KernelOptions {
    KernelOptions::default()
        .clock(ManualClock::new(T0))
        .ids(SeededIds::new(3))
        .durability(Durability::Full)
}

fn spawn_child(test: &str, dir: &Path) -> std::process::Child {
    Command::new(std::env::current_exe().unwrap())
        .args(["--exact", test, "--nocapture", "--test-threads=1"])
        .env(CHILD_ENV, dir)
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap()
}

fn assert_consistent(k: &Kernel) {
    let (scratch, stored) = recompute_root(k).unwrap();
    assert_eq!(scratch, stored);
    assert!(k.conservation().holds());
    let events = k.read_events(&Default::default()).unwrap();
    for (i, e) in events.iter().enumerate() {
        assert_eq!(e.seq, i as u64 + 1);
        assert_eq!(e.compute_hash().unwrap(), e.event_hash);
    }
}

#[test]
fn clean_reopen_reproduces_root_and_length() {
    let mut fx = Fx::standard();
    let env = fx.docs_envelope(100);
    fx.submit("bot1", ActionType::Mutate, "workspace/docs/a", json!({}), Some(&env));
    let (root, size, bal) = (fx.k.root().unwrap(), fx.len(), fx.remaining(&env));
    let key = fx.k.verifier_key();
    let dir = fx.dir;
    drop(fx.k);
    let k = Kernel::open(dir.path(), options(&ManualClock::new(T0), 1)).unwrap();
    assert_eq!((k.root().unwrap(), k.tree_size().unwrap()), (root, size));
    assert_eq!(k.envelope(&env).unwrap().remaining(), bal);
    assert_eq!(k.verifier_key(), key);
    assert_consistent(&k);
}

/// Child half of `abort_mid_transaction_leaves_pre_transaction_state`.
#[test]
fn crash_child_abort() {
    let Some(dir) = std::env::var_os(CHILD_ENV) else { return };
    let dir = Path::new(&dir);
    let mut k = Kernel::init(dir, KernelConfig::default(), full_opts()).unwrap();
    for i in 0..5 {
        k.submit_action(sovereign_core::model::Action::new(&ActorId::root(), ActionType::Observe, &format!("o/{i}"), json!({})))
            .unwrap();
    }
    let last = k.event(5).unwrap();
    drop(k);
    let mut store = Store::open(dir, Durability::Full).unwrap();
    let mut w = store.begin().unwrap();
    let mut next = last.clone();
    next.seq = 6;
    next.id = "00000000-0000-4000-8000-00000000dead".into();
    next.event_hash = next.compute_hash().unwrap();
    w.append_event(&next).unwrap();
    std::process::abort();
}

#[test]
fn abort_mid_transaction_leaves_pre_transaction_state() {
    if std::env::var_os(CHILD_ENV).is_some() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let status = spawn_child("crash_child_abort", dir.path()).wait().unwrap();
    assert!(!status.success(), "child must die by abort");
    // A fresh id stream: the child's seeded ids are already in the log.
    let mut k = Kernel::open(dir.path(), full_opts().ids(SeededIds::new(4))).unwrap();
    assert_eq!(k.tree_size().unwrap(), 5);
    assert_consistent(&k);
    let out = k
        .submit_action(sovereign_core::model::Action::new(&ActorId::root(), ActionType::Observe, "after", json!({})))
        .unwrap();
    assert_eq!(out.receipt().unwrap().log_index, 6);
}

/// Child half of `sigkill_during_commits_recovers`: commits until killed.
#[test]
fn crash_child_loop() {
    let Some(dir) = std::env::var_os(CHILD_ENV) else { return };
    let dir = Path::new(&dir);
    let clock = ManualClock::new(T0);
    let mut k = Kernel::init(dir, KernelConfig::default(), full_opts().clock(clock.clone())).unwrap();
    k.register_actor(sovereign_core::model::ActorSpec::human("alice", entries(&["**:*"])), &ActorId::root())
        .unwrap();
    std::fs::write(dir.join("ready"), b"").unwrap();
    for i in 0u64.. {
        if i % 7 == 0 {
            clock.advance_secs(1);
            k.tick().unwrap();
        }
        k.submit_action(sovereign_core::model::Action::new(&id("alice"), ActionType::Create, &format!("w/{i}"), json!({"i": i})))
            .unwrap();
    }
}

#[test]
fn sigkill_during_commits_recovers() {
    if std::env::var_os(CHILD_ENV).is_some() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let mut child = spawn_child("crash_child_loop", dir.path());
    let deadline = std::time::Instant::now() + std::time::Duration::from_secs(30);
    while !dir.path().join("ready").exists() {
        assert!(std::time::Instant::now() < deadline, "child never started");
        std::thread::sleep(std::time::Duration::from_millis(10));
    }
    std::thread::sleep(std::time::Duration::from_millis(300));
    child.kill().unwrap();
    child.wait().unwrap();
    let k = Kernel::open(dir.path(), full_opts()).unwrap();
    assert!(k.tree_size().unwrap() >= 1);
    assert_consistent(&k);
}

#[test]
fn a_second_writer_on_the_same_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let k = Kernel::init(dir.path(), KernelConfig::default(), full_opts()).unwrap();
    let err = Kernel::open(dir.path(), full_opts()).err().expect("second writer must fail");
    assert!(matches!(err, sovereign_core::KernelError::State(_)), "{err}");
    drop(k);
    assert!(Kernel::open(dir.path(), full_opts()).is_ok());
}
