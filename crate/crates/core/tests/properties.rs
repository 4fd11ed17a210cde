//! Randomized operation sequences against a live kernel.

mod common;

use common::*;
use proptest::prelude::*;
use serde_json::json;
use sovereign_core::envelope::{EnvelopeSpec, HoldDecision, HoldRule};
use sovereign_core::kernel::recompute_root;
use sovereign_core::model::{Action, ActionType, ActorId, ActorSpec, SubmitOutcome};

#[derive(Debug, Clone)]
enum Op {
    Tick,
    Advance(u64),
    Issue { budget: u64, hold: bool, timeout: Option<u64>, duration: Option<u64> },
    Submit { actor: usize, t: usize, target: usize, env: usize },
    Decide { hold: usize, approve: bool, via_action: bool },
    Sweep,
}

const ACTORS: [&str; 4] = ["alice", "bob", "bot1", "bot2"];
const TARGETS: [&str; 6] = [
    "workspace/docs/a",
    "workspace/docs/b",
    "workspace/code/x",
    "system/config",
    "ledger/x",
    "workspace/docs/deep/c",
];

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        2 => Just(Op::Tick),
        1 => (1u64..90).prop_map(Op::Advance),
        2 => (0u64..400, any::<bool>(), prop::option::of(1u64..60), prop::option::of(1u64..200))
            .prop_map(|(budget, hold, timeout, duration)| Op::Issue { budget, hold, timeout, duration }),
        8 => (0..ACTORS.len(), 0..4usize, 0..TARGETS.len(), 0..6usize)
            .prop_map(|(actor, t, target, env)| Op::Submit { actor, t, target, env }),
        3 => (0..8usize, any::<bool>(), any::<bool>()).prop_map(|(hold, approve, via_action)| Op::Decide { hold, approve, via_action }),
        1 => Just(Op::Sweep),
    ]
}

fn setup() -> Fx {
    let mut fx = Fx::new();
    let root = ActorId::root();
    fx.k.register_actor(ActorSpec::human("alice", entries(&["**:*"])), &root).unwrap();
    fx.k.register_actor(ActorSpec::human("bob", entries(&["workspace/**:*"])).with_share(2), &root).unwrap();
    fx.k.register_actor(ActorSpec::agent("bot1", "docs", entries(&["workspace/docs/*:mutate", "workspace/docs/*:execute"])), &id("alice"))
        .unwrap();
    fx.k.register_actor(ActorSpec::agent("bot2", "any", entries(&["workspace/**:*"])), &id("bob")).unwrap();
    fx
}

fn records(fx: &Fx) -> Vec<Vec<u8>> {
    let mut r = fx.k.reader().unwrap();
    let snap = r.snapshot().unwrap();
    (1..=snap.size()).map(|s| snap.db().event_record(s).unwrap().unwrap()).collect()
}

fn run(ops: Vec<Op>) -> Result<(), TestCaseError> {
    let mut fx = setup();
    let mut envs: Vec<String> = Vec::new();
    let mut holds: Vec<String> = Vec::new();
    let mut prev = records(&fx);
    for op in ops {
        let before = fx.len();
        let expected: std::ops::RangeInclusive<u64> = match op {
            Op::Tick => {
                fx.clock.advance_secs(1);
                fx.k.tick().unwrap();
                1..=u64::MAX
            }
            Op::Advance(s) => {
                fx.clock.advance_secs(s);
                0..=0
            }
            Op::Sweep => {
                fx.k.expire_holds().unwrap();
                0..=u64::MAX
            }
            Op::Issue { budget, hold, timeout, duration } => {
                let holder = if envs.len().is_multiple_of(2) { "bot1" } else { "bot2" };
                let issuer = if holder == "bot1" { "alice" } else { "bob" };
                let mut spec = EnvelopeSpec::new(&id(holder), budget, &["workspace/docs/*"], &[ActionType::Mutate, ActionType::Execute]).unwrap();
                if hold {
                    spec = spec.hold_on(HoldRule::new("workspace/**", ActionType::Mutate).unwrap());
                }
                if let Some(t) = timeout {
                    spec = spec.hold_timeout(t);
                }
                if let Some(d) = duration {
                    spec = spec.duration(d);
                }
                match fx.k.issue_envelope(&id(issuer), spec) {
                    Ok(e) => {
                        envs.push(e.id);
                        1..=u64::MAX
                    }
                    Err(_) => 0..=u64::MAX,
                }
            }
            Op::Submit { actor, t, target, env } => {
                let t = ActionType::ALL[t];
                let payload = if t == ActionType::Execute { exec_payload(Some(300)) } else { json!({"v": target}) };
                let mut a = Action::new(&id(ACTORS[actor]), t, TARGETS[target], payload);
                if let Some(e) = envs.get(env) {
                    a = a.under(e);
                }
                match fx.k.submit_action(a).unwrap() {
                    SubmitOutcome::HoldTriggered { hold_id } => {
                        holds.push(hold_id);
                        1..=u64::MAX
                    }
                    // Hold responses sweep first, so allow any growth.
                    SubmitOutcome::Committed { .. } => 1..=u64::MAX,
                    _ => 0..=u64::MAX,
                }
            }
            Op::Decide { hold, approve, via_action } => {
                let Some(h) = holds.get(hold).cloned() else { continue };
                let env = fx.k.envelope(&fx.k.hold(&h).unwrap().envelope).unwrap();
                let decider = env.issuer.clone();
                let d = if approve { HoldDecision::Approve } else { HoldDecision::Reject };
                if via_action {
                    let a = Action::new(&decider, ActionType::Mutate, &format!("ledger/hold/{h}"), json!({"decision": d.as_str()}));
                    let _ = fx.k.submit_action(a);
                } else {
                    let _ = fx.k.respond_hold(&h, d, &decider);
                }
                0..=u64::MAX
            }
        };
        let grown = fx.len() - before;
        prop_assert!(expected.contains(&grown), "{op:?} grew the log by {grown}");

        // Energy: exact bookkeeping and per-envelope bounds.
        let c = fx.k.conservation();
        prop_assert!(c.holds(), "{op:?}: {c:?}");
        for e in fx.k.envelopes() {
            prop_assert!(e.consumed + e.reserved + e.delegated <= e.budget, "{e:?}");
        }
        // The log only ever grows by appending.
        let now = records(&fx);
        prop_assert!(now.len() >= prev.len());
        prop_assert!(now[..prev.len()] == prev[..], "history changed under {op:?}");
        prev = now;
    }
    let (scratch, stored) = recompute_root(&fx.k).unwrap();
    prop_assert_eq!(scratch, stored);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn random_sequences_keep_the_invariants(ops in prop::collection::vec(op(), 1..70)) {
        run(ops)?;
    }
}

/// Outcome-level completeness on a simpler sequence: rejected and unfunded
/// submissions never touch the log, funded ones add exactly one event.
#[test]
fn outcomes_map_one_to_one_onto_events() {
    let mut fx = setup();
    let env = {
        let spec = EnvelopeSpec::new(&id("bot1"), 40, &["workspace/docs/*"], &[ActionType::Mutate]).unwrap();
        fx.envelope("alice", spec)
    };
    let mut seen = (0, 0, 0);
    for target in TARGETS.iter().cycle().take(30) {
        let before = fx.len();
        let out = fx.submit("bot1", ActionType::Mutate, target, json!({}), Some(&env));
        let grown = fx.len() - before;
        match out {
            SubmitOutcome::Committed { .. } => {
                assert_eq!(grown, 1);
                seen.0 += 1;
            }
            SubmitOutcome::Rejected { .. } => {
                assert_eq!(grown, 0);
                seen.1 += 1;
            }
            SubmitOutcome::InsufficientEnergy { .. } => {
                assert_eq!(grown, 0);
                seen.2 += 1;
            }
            SubmitOutcome::HoldTriggered { .. } => unreachable!(),
        }
    }
    assert_eq!(seen.0, 2);
    assert!(seen.1 > 0 && seen.2 > 0);
}
