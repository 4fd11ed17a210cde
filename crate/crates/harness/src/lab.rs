//! Fresh, throwaway kernels with an injected clock.

use serde_json::{json, Value};
use sovereign_core::boundary::WritableEntry;
use sovereign_core::clock::{ManualClock, SeededIds, NANOS_PER_SEC};
use sovereign_core::config::KernelConfig;
use sovereign_core::envelope::{EnvelopeSpec, HoldRule};
use sovereign_core::model::{Action, ActionType, ActorId, ActorSpec, SubmitOutcome};
use sovereign_core::store::Durability;
use sovereign_core::{Kernel, KernelOptions, Result};
use tempfile::TempDir;

pub const T0: u64 = 1_700_000_000 * NANOS_PER_SEC;
pub const SIGNING_SEED: [u8; 32] = [7; 32];

pub struct Lab {
    pub dir: TempDir,
    pub k: Kernel,
    pub clock: ManualClock,
}

pub fn id(s: &str) -> ActorId {
    ActorId::new(s).expect("valid actor id")
}

pub fn entries(list: &[&str]) -> Vec<WritableEntry> {
    list.iter().map(|s| s.parse().expect("valid entry")).collect()
}

pub fn oid(fill: char) -> String {
    format!("sha256:{}", fill.to_string().repeat(64))
}

/// A well-formed execute payload.
pub fn exec_payload(output_bytes: u64) -> Value {
    json!({
        "input_oid": oid('a'),
        "output_oid": oid('b'),
        "exit_code": 0,
        "artifact_hash": oid('c'),
        "output_bytes": output_bytes,
    })
}

pub fn payload_for(t: ActionType, i: u64) -> Value {
    match t {
        ActionType::Execute => exec_payload(i % 1024),
        _ => json!({ "i": i }),
    }
}

/// Production large enough that benches never wait on energy.
pub fn rich_config() -> KernelConfig {
    let mut cfg = KernelConfig::default();
    cfg.capacity.lambda = 100_000_000;
    cfg
}

impl Lab {
    pub fn new(id_seed: u64) -> Lab {
        Lab::with(KernelConfig::default(), id_seed, Durability::Normal)
    }

    pub fn with(cfg: KernelConfig, id_seed: u64, durability: Durability) -> Lab {
        let dir = tempfile::tempdir().expect("temp dir");
        let clock = ManualClock::new(T0);
        let opts = KernelOptions::default()
            .clock(clock.clone())
            .ids(SeededIds::new(id_seed))
            .durability(durability)
            .signing_seed(SIGNING_SEED);
        let k = Kernel::init(dir.path(), cfg, opts).expect("init kernel");
        Lab { dir, k, clock }
    }

    /// alice: human with full authority. bot1: agent created by alice,
    /// limited to mutate and execute directly under workspace/docs.
    pub fn standard(id_seed: u64) -> Lab {
        let mut lab = Lab::new(id_seed);
        lab.add_standard_actors().expect("standard actors");
        lab
    }

    pub fn add_standard_actors(&mut self) -> Result<()> {
        self.k.register_actor(ActorSpec::human("alice", entries(&["**:*"])), &ActorId::root())?;
        self.k.register_actor(
            ActorSpec::agent("bot1", "docs assistant", entries(&["workspace/docs/*:mutate", "workspace/docs/*:execute"])),
            &id("alice"),
        )?;
        Ok(())
    }

    pub fn len(&self) -> u64 {
        self.k.tree_size().expect("tree size")
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Advances the clock one tick interval and produces energy.
    pub fn tick(&mut self) -> Result<()> {
        self.clock.advance(self.k.config().capacity.tick_interval_ns());
        self.k.tick().map(|_| ())
    }

    pub fn fund(&mut self, who: &str, amount: u64) -> Result<()> {
        while self.k.balance(&id(who)).available < amount {
            self.tick()?;
        }
        Ok(())
    }

    pub fn envelope(&mut self, issuer: &str, spec: EnvelopeSpec) -> Result<String> {
        self.fund(issuer, spec.budget)?;
        Ok(self.k.issue_envelope(&id(issuer), spec)?.id)
    }

    /// bot1 envelope over workspace/docs/*; with `hold`, every mutate under
    /// workspace waits for a human.
    pub fn bot_envelope(&mut self, budget: u64, hold: bool) -> Result<String> {
        let mut spec = EnvelopeSpec::new(
            &id("bot1"),
            budget,
            &["workspace/docs/*"],
            &[ActionType::Mutate, ActionType::Execute],
        )?;
        if hold {
            spec = spec.hold_on(HoldRule::new("workspace/**", ActionType::Mutate)?);
        }
        self.envelope("alice", spec)
    }

    pub fn submit(&mut self, actor: &str, t: ActionType, target: &str, payload: Value, env: Option<&str>) -> Result<SubmitOutcome> {
        let mut a = Action::new(&id(actor), t, target, payload);
        if let Some(e) = env {
            a = a.under(e);
        }
        self.k.submit_action(a)
    }

    /// A human's decision through the action route.
    pub fn decide(&mut self, human: &str, hold_id: &str, decision: &str) -> Result<SubmitOutcome> {
        self.submit(
            human,
            ActionType::Mutate,
            &format!("ledger/hold/{hold_id}"),
            json!({ "decision": decision }),
            None,
        )
    }

    /// Committed root observes on `workspace/<prefix>/<i>`.
    pub fn observe(&mut self, prefix: &str, n: usize) -> Result<()> {
        for i in 0..n {
            let out = self.submit("root", ActionType::Observe, &format!("workspace/{prefix}/{i}"), json!({ "i": i }), None)?;
            assert!(out.is_committed(), "root observe must commit: {out:?}");
        }
        Ok(())
    }
}
