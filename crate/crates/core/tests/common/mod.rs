#![allow(dead_code)]

use serde_json::{json, Value};
use sovereign_core::boundary::WritableEntry;
use sovereign_core::clock::{ManualClock, SeededIds, NANOS_PER_SEC};
use sovereign_core::config::KernelConfig;
use sovereign_core::envelope::{EnvelopeSpec, HoldRule};
use sovereign_core::model::{Action, ActionType, ActorId, ActorSpec, SubmitOutcome};
use sovereign_core::store::{Durability, EventFilter};
use sovereign_core::{Kernel, KernelOptions};
use tempfile::TempDir;

pub const T0: u64 = 1_700_000_000 * NANOS_PER_SEC;

pub struct Fx {
    pub dir: TempDir,
    pub k: Kernel,
    pub clock: ManualClock,
}

pub fn id(s: &str) -> ActorId {
    ActorId::new(s).unwrap()
}

pub fn entries(list: &[&str]) -> Vec<WritableEntry> {
    list.iter().map(|s| s.parse().unwrap()).collect()
}

pub fn oid(fill: char) -> String {
    format!("sha256:{}", fill.to_string().repeat(64))
}

pub fn exec_payload(output_bytes: Option<u64>) -> Value {
    let mut p = json!({
        "input_oid": oid('a'),
        "output_oid": oid('b'),
        "exit_code": 0,
        "artifact_hash": oid('c'),
    });
    if let Some(n) = output_bytes {
        p["output_bytes"] = json!(n);
    }
    p
}

pub fn options(clock: &ManualClock, seed: u64) -> KernelOptions {
    KernelOptions::default()
        .clock(clock.clone())
        .ids(SeededIds::new(seed))
        .durability(Durability::Normal)
        .signing_seed([7; 32])
}

impl Fx {
    pub fn new() -> Fx {
        Fx::with_config(KernelConfig::default())
    }

    pub fn with_config(cfg: KernelConfig) -> Fx {
        let dir = tempfile::tempdir().unwrap();
        let clock = ManualClock::new(T0);
        let k = Kernel::init(dir.path(), cfg, options(&clock, 42)).unwrap();
        Fx { dir, k, clock }
    }

    /// alice: human with full authority; bot1: agent limited to mutate and
    /// execute under workspace/docs/*, created by alice.
    pub fn standard() -> Fx {
        let mut fx = Fx::new();
        fx.k.register_actor(ActorSpec::human("alice", entries(&["**:*"])), &ActorId::root())
            .unwrap();
        fx.k.register_actor(
            ActorSpec::agent(
                "bot1",
                "docs assistant",
                entries(&["workspace/docs/*:mutate", "workspace/docs/*:execute"]),
            ),
            &id("alice"),
        )
        .unwrap();
        fx
    }

    pub fn len(&self) -> u64 {
        self.k.tree_size().unwrap()
    }

    pub fn tick(&mut self) {
        self.clock.advance_secs(1);
        self.k.tick().unwrap();
    }

    /// Ticks until `who` has at least `amount` available.
    pub fn fund(&mut self, who: &str, amount: u64) {
        while self.k.balance(&id(who)).available < amount {
            self.tick();
        }
    }

    pub fn envelope(&mut self, issuer: &str, spec: EnvelopeSpec) -> String {
        self.fund(issuer, spec.budget);
        self.k.issue_envelope(&id(issuer), spec).unwrap().id
    }

    /// Docs-mutate envelope for bot1.
    pub fn docs_envelope(&mut self, budget: u64) -> String {
        let spec = EnvelopeSpec::new(&id("bot1"), budget, &["workspace/docs/*"], &[ActionType::Mutate]).unwrap();
        self.envelope("alice", spec)
    }

    /// Envelope for bot1 with a hold rule on every mutate under workspace.
    pub fn held_envelope(&mut self, budget: u64, timeout: Option<u64>) -> String {
        let mut spec = EnvelopeSpec::new(
            &id("bot1"),
            budget,
            &["workspace/docs/*"],
            &[ActionType::Mutate, ActionType::Execute],
        )
        .unwrap()
        .hold_on(HoldRule::new("workspace/**", ActionType::Mutate).unwrap());
        if let Some(t) = timeout {
            spec = spec.hold_timeout(t);
        }
        self.envelope("alice", spec)
    }

    pub fn submit(&mut self, actor: &str, t: ActionType, target: &str, payload: Value, env: Option<&str>) -> SubmitOutcome {
        let mut a = Action::new(&id(actor), t, target, payload);
        if let Some(e) = env {
            a = a.under(e);
        }
        self.k.submit_action(a).unwrap()
    }

    pub fn remaining(&self, env: &str) -> u64 {
        self.k.envelope(env).unwrap().remaining()
    }

    pub fn events(&self) -> Vec<sovereign_core::model::Event> {
        self.k.read_events(&EventFilter::default()).unwrap()
    }

    pub fn hold_id(outcome: &SubmitOutcome) -> String {
        match outcome {
            SubmitOutcome::HoldTriggered { hold_id } => hold_id.clone(),
            other => panic!("expected a hold, got {other:?}"),
        }
    }
}
