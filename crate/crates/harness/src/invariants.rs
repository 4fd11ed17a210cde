//! The five adversarial invariant scenarios. Each runs on a fresh kernel.

use serde_json::json;
use sovereign_core::audit;
use sovereign_core::boundary::{self, BoundaryDecision};
use sovereign_core::model::{ActionType, ActorId, ActorSpec, SubmitOutcome};
use sovereign_core::store::EventFilter;
use sovereign_core::KernelError;
use sovereign_verify::merkle::{self, Hash};
use sovereign_verify::{parse_key, verify_package, Package};

use crate::lab::{entries, id, Lab};
use crate::scenario::{Scenario, ScenarioResult};

type R = Result<(), KernelError>;

pub fn run_invariants() -> Vec<ScenarioResult> {
    vec![inv1_append_only(), inv2_completeness(), inv3_integrity(), inv4_boundary(), inv5_energy()]
}

fn short(h: &[u8]) -> String {
    format!("{}…", &sovereign_core::tlog::Digest::from_slice(h).unwrap().to_hex()[..4])
}

fn bytes32(d: &sovereign_core::tlog::Digest) -> Hash {
    *d.as_bytes()
}

fn package(lab: &mut Lab, filter: &EventFilter) -> Result<Package, KernelError> {
    let pkg = audit::export_package(&mut lab.k, filter)?;
    let value = serde_json::to_value(&pkg).map_err(|e| KernelError::Format(e.to_string()))?;
    serde_json::from_value(value).map_err(|e| KernelError::Format(e.to_string()))
}

fn trusted_key(lab: &Lab) -> sovereign_verify::TrustedKey {
    parse_key(&lab.k.verifier_key().to_string()).expect("kernel key parses")
}

/// Five actions, then event 3's payload is rewritten directly in the store.
/// The recomputed leaf diverges and no longer proves against the old root.
pub fn inv1_append_only() -> ScenarioResult {
    Scenario::new("INV-1", "append-only: out-of-band edit is detected").run(|s| -> R {
        let mut lab = Lab::new(1);
        lab.observe("inv1", 5)?;
        s.steps(5);
        let root = lab.k.root()?.expect("non-empty");
        let proof = lab.k.prove_inclusion(3, None)?;
        let original = lab.k.event(3)?;

        lab.k.store_mut().tamper_event(3, |doc| doc["payload"]["i"] = json!(1002))?;
        s.step();
        let tampered = lab.k.event(3)?;
        s.check("payload changed in the store", tampered.payload != original.payload, &tampered.payload);

        let value = serde_json::to_value(&tampered).expect("event serializes");
        let recomputed = sovereign_verify::event_leaf(&value).map_err(KernelError::Format)?;
        let stored = bytes32(&original.event_hash);
        s.check(
            "recomputed leaf diverges from stored leaf",
            recomputed != stored,
            format!("{} → {}", short(&stored), short(&recomputed)),
        );
        let path: Vec<Hash> = proof.path.iter().map(bytes32).collect();
        let still = merkle::verify_inclusion(&bytes32(&root), 5, 2, &recomputed, &path);
        s.expect("inclusion against the original root", false, still);
        s.expect("untampered leaf still proves", true, merkle::verify_inclusion(&bytes32(&root), 5, 2, &stored, &path));

        let report = verify_package(&package(&mut lab, &EventFilter::default())?, &trusted_key(&lab));
        let flagged: Vec<u64> = report.failing_events().filter_map(|e| e.seq).collect();
        s.expect("independent verifier flags exactly event 3", vec![3], flagged);
        Ok(())
    })
}

/// Twenty submissions, five out of bounds; then one hold through request
/// and response.
pub fn inv2_completeness() -> ScenarioResult {
    Scenario::new("INV-2", "completeness: 15 events for 15 legitimate actions").run(|s| -> R {
        let mut lab = Lab::standard(2);
        lab.k.register_actor(
            ActorSpec::agent("bot2", "writer", entries(&["workspace/docs/**:*"])),
            &id("alice"),
        )?;
        let spec = sovereign_core::envelope::EnvelopeSpec::new(
            &id("bot2"),
            1000,
            &["workspace/docs/**"],
            &[ActionType::Create, ActionType::Mutate],
        )?;
        let env = lab.envelope("alice", spec)?;
        let start = lab.len();
        let (mut committed, mut rejected, mut stray) = (0, 0, 0);
        for i in 0..20 {
            let (t, target) = match i / 5 {
                0 => (ActionType::Observe, format!("workspace/docs/o{i}")),
                1 => (ActionType::Create, format!("workspace/docs/c{i}")),
                2 => (ActionType::Mutate, format!("workspace/docs/c{}", i - 5)),
                _ => (ActionType::Mutate, format!("system/s{i}")),
            };
            let before = lab.len();
            let out = lab.submit("bot2", t, &target, json!({ "i": i }), Some(&env))?;
            s.step();
            let grew = lab.len() - before;
            match out {
                SubmitOutcome::Committed { .. } if grew == 1 => committed += 1,
                SubmitOutcome::Rejected { .. } if grew == 0 => rejected += 1,
                _ => stray += 1,
            }
        }
        s.expect("committed with one event each", 15, committed);
        s.expect("rejected with no event", 5, rejected);
        s.expect("outcomes not matching their log effect", 0, stray);
        s.expect("log growth", 15, lab.len() - start);

        let held = lab.bot_envelope(100, true)?;
        let before = lab.len();
        let hold_id = match lab.submit("bot1", ActionType::Mutate, "workspace/docs/h.md", json!({}), Some(&held))? {
            SubmitOutcome::HoldTriggered { hold_id } => hold_id,
            other => return Err(KernelError::State(format!("expected a hold, got {other:?}"))),
        };
        lab.decide("alice", &hold_id, "reject")?;
        s.steps(2);
        let kinds: Vec<String> = lab
            .k
            .read_events(&EventFilter { from_seq: Some(before + 1), ..EventFilter::default() })?
            .iter()
            .map(|e| e.payload["kind"].as_str().unwrap_or("").to_string())
            .collect();
        s.expect("hold events recorded", vec!["hold_request".to_string(), "hold_response".to_string()], kinds);
        Ok(())
    })
}

/// Ten actions proven by the independent verifier, then five more and a
/// consistency proof from 10 to 15.
pub fn inv3_integrity() -> ScenarioResult {
    Scenario::new("INV-3", "integrity: independent proofs and consistency").run(|s| -> R {
        let mut lab = Lab::new(3);
        lab.observe("inv3", 10)?;
        s.steps(10);
        let key = trusted_key(&lab);
        let first = package(&mut lab, &EventFilter::default())?;
        let report = verify_package(&first, &key);
        s.expect("inclusion proofs verified", (10, 10), (report.passed_events(), report.events.len()));
        s.expect("checkpoint signature", true, report.checkpoint.ok);
        let lens: Vec<usize> = first.proofs.iter().map(|p| p.path.len()).collect();
        let max = lens.iter().copied().max().unwrap_or(0);
        let total: usize = lens.iter().sum();
        s.expect("max path length at size 10", 4, max);
        // 36 hashes over 10 proofs is an average of exactly 3.6.
        s.expect("total path hashes at size 10 (average 3.6)", 36, total);

        lab.observe("inv3b", 5)?;
        s.steps(5);
        let second = package(&mut lab, &EventFilter::default())?;
        let report = verify_package(&second, &key);
        let c = second.consistency.as_ref().map(|c| (c.old_size, c.new_size));
        s.expect("consistency proof sizes", Some((10, 15)), c);
        s.expect("consistency (10, 15) verifies", Some(true), report.consistency.as_ref().map(|c| c.ok));
        s.expect("all 15 events verify", true, report.ok);
        Ok(())
    })
}

/// The seven-case boundary matrix for an agent limited to mutate under
/// workspace/docs/*. Every case goes through the full pipeline.
pub fn inv4_boundary() -> ScenarioResult {
    Scenario::new("INV-4", "boundary enforcement: 7-case matrix").run(|s| -> R {
        let mut lab = Lab::new(4);
        lab.k.register_actor(ActorSpec::human("alice", entries(&["**:*"])), &ActorId::root())?;
        lab.k.register_actor(
            ActorSpec::agent("bot1", "docs writer", entries(&["workspace/docs/*:mutate"])),
            &id("alice"),
        )?;
        let env = {
            let spec = sovereign_core::envelope::EnvelopeSpec::new(
                &id("bot1"),
                100,
                &["workspace/docs/*"],
                &[ActionType::Mutate],
            )?;
            lab.envelope("alice", spec)?
        };
        lab.fund("root", 15)?;
        let cases: [(&str, ActionType, &str, bool); 7] = [
            ("bot1", ActionType::Mutate, "workspace/docs/a.md", true),
            ("bot1", ActionType::Mutate, "workspace/code/x.rs", false),
            ("bot1", ActionType::Create, "workspace/docs/b.md", false),
            ("bot1", ActionType::Mutate, "system/config", false),
            ("bot1", ActionType::Mutate, "ledger/x", false),
            ("bot1", ActionType::Observe, "workspace/code/x.rs", true),
            ("root", ActionType::Mutate, "system/config", true),
        ];
        let mut matched = 0;
        for (actor, t, target, allowed) in cases {
            let now = lab.k.now();
            let decision = boundary::check(lab.k.actor(&id(actor))?, t, target, now);
            let before = lab.len();
            let under = (actor != "root" && t != ActionType::Observe).then_some(env.as_str());
            let out = lab.submit(actor, t, target, json!({}), under)?;
            s.step();
            let grew = lab.len() - before;
            let observed = (decision == BoundaryDecision::Validated, out.is_committed(), grew);
            let expected = (allowed, allowed, allowed as u64);
            if s.expect(&format!("{actor} {} {target}", t.as_str()), expected, observed) {
                matched += 1;
            }
        }
        s.expect("matrix cases matching", 7, matched);
        Ok(())
    })
}

/// Budget-100 descent by 15s to 10, then an unfunded seventh mutate; and a
/// rejected hold settling its commitment on a 1000 budget.
pub fn inv5_energy() -> ScenarioResult {
    Scenario::new("INV-5", "energy conservation: descent and commitment").run(|s| -> R {
        let mut lab = Lab::standard(5);
        let env = lab.bot_envelope(100, false)?;
        let mut trace = vec![lab.k.envelope(&env)?.remaining()];
        for i in 0..6 {
            let out = lab.submit("bot1", ActionType::Mutate, &format!("workspace/docs/{i}.md"), json!({}), Some(&env))?;
            s.step();
            s.expect(&format!("mutate {} commits", i + 1), true, out.is_committed());
            trace.push(lab.k.envelope(&env)?.remaining());
        }
        s.expect("balance trace", vec![100, 85, 70, 55, 40, 25, 10], trace);
        let before = lab.len();
        let out = lab.submit("bot1", ActionType::Mutate, "workspace/docs/7.md", json!({}), Some(&env))?;
        s.step();
        s.expect(
            "seventh mutate",
            SubmitOutcome::InsufficientEnergy { needed: 15, available: 10 },
            out,
        );
        s.expect("balance unchanged", 10, lab.k.envelope(&env)?.remaining());
        s.expect("no event for the unfunded action", 0, lab.len() - before);

        let held = lab.bot_envelope(1000, true)?;
        let hold_id = match lab.submit("bot1", ActionType::Mutate, "workspace/docs/h.md", json!({}), Some(&held))? {
            SubmitOutcome::HoldTriggered { hold_id } => hold_id,
            other => return Err(KernelError::State(format!("expected a hold, got {other:?}"))),
        };
        s.expect("hold reserves the quote", 15, lab.k.envelope(&held)?.reserved);
        lab.decide("alice", &hold_id, "reject")?;
        s.steps(2);
        s.expect("commitment settled", Some(3), lab.k.hold(&hold_id)?.commitment);
        s.expect("budget after reject", 997, lab.k.envelope(&held)?.remaining());
        let c = lab.k.conservation();
        s.check("conservation: minted = balances + envelopes + consumed", c.holds(), format!("{c:?}"));
        let overdrawn = lab.k.envelopes().filter(|e| e.consumed + e.reserved + e.delegated > e.budget).count();
        s.expect("envelopes overdrawn", 0, overdrawn);
        Ok(())
    })
}
