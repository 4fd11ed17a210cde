//! Seeded randomized fuzz: mixed action types, random writable sets, random
//! envelopes and holds with random decisions, interleaved ticks. Every step
//! is checked against the completeness and energy invariants; the log is
//! snapshot-compared and its root recomputed from scratch periodically and
//! at the end.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::Serialize;
use serde_json::json;
use sovereign_core::boundary::{self, ActionMatch, BoundaryDecision, WritableEntry};
use sovereign_core::envelope::{EnvelopeSpec, HoldDecision, HoldRule, HoldState};
use sovereign_core::kernel::recompute_root;
use sovereign_core::model::{Action, ActionType, ActorId, ActorSpec, SubmitOutcome};
use sovereign_core::{KernelError, Result};

use crate::lab::{exec_payload, id, Lab};

const PATTERNS: [&str; 8] = [
    "workspace/docs/*",
    "workspace/**",
    "workspace/*/x",
    "workspace/code/**",
    "tmp/*",
    "workspace/docs/a",
    "**",
    "workspace/*.md",
];

const TARGETS: [&str; 12] = [
    "workspace/docs/a",
    "workspace/docs/b.md",
    "workspace/docs/sub/c",
    "workspace/code/main.rs",
    "workspace/q/x",
    "workspace/notes.md",
    "workspace/x",
    "tmp/z",
    "tmp/a/b",
    "system/config",
    "ledger/x",
    "ledger/hold/h-unknown",
];

const AGENTS: [&str; 4] = ["ag1", "ag2", "ag3", "ag4"];
const HUMANS: [&str; 2] = ["alice", "bob"];

/// Independent glob oracle: translate a pattern into a regex. `*` stays
/// within a segment, a whole `**` segment spans zero or more segments.
pub fn glob_regex(pattern: &str) -> Regex {
    let mut segs: Vec<&str> = pattern.split('/').collect();
    // Adjacent `**` segments match the same set as one.
    segs.dedup_by(|a, b| *a == "**" && *b == "**");
    let mut re = String::from("^");
    let mut need_slash = false;
    for (i, seg) in segs.iter().enumerate() {
        let last = i + 1 == segs.len();
        if *seg == "**" {
            re.push_str(match (i == 0, last) {
                (true, true) => "[^/]+(?:/[^/]+)*",
                (false, true) => "(?:/[^/]+)*",
                (true, false) => "(?:[^/]+/)*",
                (false, false) => "/(?:[^/]+/)*",
            });
            need_slash = false;
            continue;
        }
        if need_slash {
            re.push('/');
        }
        for c in seg.chars() {
            if c == '*' {
                re.push_str("[^/]*");
            } else {
                re.push_str(&regex::escape(&c.to_string()));
            }
        }
        need_slash = true;
    }
    re.push('$');
    Regex::new(&re).expect("pattern regex")
}

/// Whether some explicit reason permits `(actor, t, target)`: root, an
/// observe, a human deciding a hold, or a witnessing writable entry.
fn witness(actor: &ActorId, human: bool, writable: &[WritableEntry], t: ActionType, target: &str) -> bool {
    if actor.is_root() || t == ActionType::Observe {
        return true;
    }
    let privileged = target.starts_with("system/") || target.starts_with("ledger/");
    if privileged {
        return human && t == ActionType::Mutate && target.starts_with("ledger/hold/") && target.matches('/').count() == 2;
    }
    writable.iter().any(|e| {
        let type_ok = match e.action {
            ActionMatch::Any => true,
            ActionMatch::Only(a) => a == t,
        };
        type_ok && glob_regex(e.pattern.as_str()).is_match(target)
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FuzzReport {
    pub seed: u64,
    pub actions: u64,
    pub ticks: u64,
    pub events: u64,
    pub outcomes: BTreeMap<String, u64>,
    pub boundary_checks: u64,
    pub prefix_checks: u64,
    pub root_checks: u64,
    pub violations: Vec<String>,
    pub elapsed_ms: f64,
}

impl FuzzReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

struct Fuzz {
    lab: Lab,
    rng: ChaCha8Rng,
    envs: Vec<String>,
    holds: Vec<String>,
    report: FuzzReport,
    snapshot: Vec<Vec<u8>>,
}

impl Fuzz {
    fn violation(&mut self, what: String) {
        if self.report.violations.len() < 50 {
            self.report.violations.push(what);
        }
    }

    fn count(&mut self, key: &str) {
        *self.report.outcomes.entry(key.into()).or_default() += 1;
    }

    fn records(&self) -> Result<Vec<Vec<u8>>> {
        let mut r = self.lab.k.reader()?;
        let snap = r.snapshot()?;
        (1..=snap.size())
            .map(|s| snap.db().event_record(s)?.ok_or_else(|| KernelError::NotFound(format!("event {s}"))))
            .collect()
    }

    fn random_writable(&mut self) -> Vec<WritableEntry> {
        let n = self.rng.gen_range(1..4);
        (0..n)
            .map(|_| {
                let p = *PATTERNS.choose(&mut self.rng).unwrap();
                let a = if self.rng.gen_bool(0.3) { "*" } else { ActionType::ALL.choose(&mut self.rng).unwrap().as_str() };
                format!("{p}:{a}").parse().expect("entry")
            })
            .collect()
    }

    fn setup(&mut self) -> Result<()> {
        let root = ActorId::root();
        self.lab.k.register_actor(ActorSpec::human("alice", "**:*".parse().map(|e| vec![e]).unwrap()), &root)?;
        let bob_w = {
            let mut w = self.random_writable();
            w.push("workspace/**:*".parse().unwrap());
            w
        };
        self.lab.k.register_actor(ActorSpec::human("bob", bob_w).with_share(2), &root)?;
        for (i, a) in AGENTS.iter().enumerate() {
            let creator = HUMANS[i % 2];
            let expiry = self.rng.gen_bool(0.25).then(|| self.lab.k.now() + self.rng.gen_range(600..20_000) * 1_000_000_000);
            // Sets outside the creator's authority are refused; draw again.
            for _ in 0..20 {
                let mut spec = ActorSpec::agent(a, "fuzzed", self.random_writable());
                if let Some(t) = expiry {
                    spec = spec.with_expiry(t);
                }
                if self.lab.k.register_actor(spec, &id(creator)).is_ok() {
                    break;
                }
            }
        }
        for _ in 0..3 {
            self.lab.tick()?;
        }
        Ok(())
    }

    fn issue(&mut self) -> Result<u64> {
        let holder = *AGENTS.choose(&mut self.rng).unwrap();
        let issuer = *HUMANS.choose(&mut self.rng).unwrap();
        // Mostly scoped from the holder's own entries, sometimes arbitrary.
        let own: Vec<WritableEntry> = self.lab.k.actor(&id(holder)).map(|a| a.writable.clone()).unwrap_or_default();
        let (targets, actions): (Vec<String>, Vec<ActionType>) = match own.choose(&mut self.rng) {
            Some(e) if self.rng.gen_bool(0.75) => {
                let actions = match e.action {
                    ActionMatch::Only(t) if t.is_state_changing() => vec![t],
                    _ => vec![ActionType::Create, ActionType::Mutate, ActionType::Execute],
                };
                (vec![e.pattern.as_str().to_string()], actions)
            }
            _ => (
                (0..self.rng.gen_range(1..3)).map(|_| PATTERNS.choose(&mut self.rng).unwrap().to_string()).collect(),
                ActionType::ALL.iter().copied().filter(|t| t.is_state_changing() && self.rng.gen_bool(0.6)).collect(),
            ),
        };
        let targets: Vec<&str> = targets.iter().map(String::as_str).collect();
        let budget = self.rng.gen_range(0..400);
        let Ok(mut spec) = EnvelopeSpec::new(&id(holder), budget, &targets, &actions) else {
            return Ok(0);
        };
        if self.rng.gen_bool(0.5) {
            let p = if self.rng.gen_bool(0.5) { "workspace/**" } else { *PATTERNS.choose(&mut self.rng).unwrap() };
            let t = if self.rng.gen_bool(0.6) { ActionType::Mutate } else { *actions.choose(&mut self.rng).unwrap_or(&ActionType::Create) };
            spec = spec.hold_on(HoldRule::new(p, t)?);
        }
        if self.rng.gen_bool(0.5) {
            spec = spec.hold_timeout(self.rng.gen_range(1..120));
        }
        if self.rng.gen_bool(0.3) {
            spec = spec.duration(self.rng.gen_range(1..600));
        }
        let before = self.lab.len();
        match self.lab.k.issue_envelope(&id(issuer), spec) {
            Ok(e) => {
                self.envs.push(e.id);
                self.count("envelope_issued");
                Ok(self.lab.len() - before)
            }
            Err(_) => {
                self.count("envelope_refused");
                Ok(0)
            }
        }
    }

    fn submit(&mut self) -> Result<()> {
        let pool: Vec<&str> = ["root"].iter().chain(HUMANS.iter()).chain(AGENTS.iter()).copied().collect();
        let actor_name = *pool.choose(&mut self.rng).unwrap();
        let actor = id(actor_name);
        let mut t = *ActionType::ALL.choose(&mut self.rng).unwrap();
        // Agents mostly act under their own envelopes on covered targets, so
        // commits and holds are common rather than incidental.
        let own: Vec<String> = self
            .envs
            .iter()
            .filter(|e| self.lab.k.envelope(e).is_ok_and(|e| e.holder == actor))
            .cloned()
            .collect();
        let chosen_env = if !own.is_empty() && self.rng.gen_bool(0.85) {
            own.choose(&mut self.rng).cloned()
        } else if self.rng.gen_bool(0.15) {
            self.envs.choose(&mut self.rng).cloned()
        } else {
            None
        };
        let env_doc = chosen_env.as_ref().and_then(|e| self.lab.k.envelope(e).ok()).cloned();
        if let Some(env) = &env_doc {
            if !env.actions.is_empty() && self.rng.gen_bool(0.7) {
                t = *env.actions.choose(&mut self.rng).unwrap();
            }
        }
        let covered: Vec<&str> = match &env_doc {
            Some(env) => TARGETS
                .iter()
                .copied()
                .filter(|t| env.targets.iter().any(|p| glob_regex(p.as_str()).is_match(t)))
                .collect(),
            None => Vec::new(),
        };
        let target = match covered.choose(&mut self.rng) {
            Some(t) if self.rng.gen_bool(0.7) => *t,
            _ => *TARGETS.choose(&mut self.rng).unwrap(),
        };
        let payload = match t {
            ActionType::Execute if self.rng.gen_bool(0.9) => exec_payload(self.rng.gen_range(0..2048)),
            ActionType::Execute => json!({ "exit_code": "zero" }),
            _ => json!({ "n": self.report.actions }),
        };
        let mut action = Action::new(&actor, t, target, payload);
        if let Some(e) = &chosen_env {
            action = action.under(e);
        }
        // Independent boundary oracle, before the submission changes time.
        let known = self.lab.k.actor(&actor).ok().cloned();
        let now = self.lab.k.now();
        if let Some(a) = &known {
            let decision = boundary::check(a, t, target, now);
            let expect = a.is_active_at(now) && witness(&a.id, a.is_human(), &a.writable, t, target);
            self.report.boundary_checks += 1;
            if (decision == BoundaryDecision::Validated) != expect {
                self.violation(format!("boundary {actor_name} {} {target}: kernel {decision:?}, oracle {expect}", t.as_str()));
            }
        }

        let before = self.lab.len();
        let result = self.lab.k.submit_action(action);
        let grew = self.lab.len() - before;
        let (label, expected) = match &result {
            Ok(SubmitOutcome::Committed { .. }) => ("committed", 1),
            Ok(SubmitOutcome::HoldTriggered { hold_id }) => {
                self.holds.push(hold_id.clone());
                ("hold_triggered", 1)
            }
            Ok(SubmitOutcome::Rejected { .. }) => ("rejected", 0),
            Ok(SubmitOutcome::InsufficientEnergy { .. }) => ("insufficient_energy", 0),
            Err(KernelError::Payload { .. }) | Err(KernelError::Encoding(_)) => ("payload_error", 0),
            Err(KernelError::NotFound(_)) | Err(KernelError::PolicyViolation(_)) | Err(KernelError::State(_)) => {
                ("refused", 0)
            }
            Err(e) => return Err(KernelError::Consistency(format!("unexpected kernel error: {e}"))),
        };
        self.count(label);
        if grew != expected {
            self.violation(format!("{label} for {actor_name} {} {target} grew the log by {grew}", t.as_str()));
        }
        if matches!(label, "committed" | "hold_triggered") {
            let ok = known.as_ref().is_some_and(|a| witness(&a.id, a.is_human(), &a.writable, t, target));
            if !ok {
                self.violation(format!("{actor_name} {} {target} committed without a witnessing entry", t.as_str()));
            }
        }
        Ok(())
    }

    fn decide(&mut self) -> Result<()> {
        let pending: Vec<String> = self.lab.k.pending_holds().into_iter().map(|h| h.id).collect();
        let pick = if !pending.is_empty() && self.rng.gen_bool(0.85) { &pending } else { &self.holds };
        let Some(hold_id) = pick.choose(&mut self.rng).cloned() else {
            return Ok(());
        };
        let hold = self.lab.k.hold(&hold_id)?.clone();
        let env = self.lab.k.envelope(&hold.envelope)?.clone();
        let decider = if self.rng.gen_bool(0.85) { env.issuer.clone() } else { id(HUMANS.choose(&mut self.rng).unwrap()) };
        let approve = self.rng.gen_bool(0.5);
        let decision = if approve { HoldDecision::Approve } else { HoldDecision::Reject };
        let via_action = self.rng.gen_bool(0.5);
        let before = self.lab.len();
        let result = if via_action {
            let a = Action::new(&decider, ActionType::Mutate, &format!("ledger/hold/{hold_id}"), json!({ "decision": decision.as_str() }));
            self.lab.k.submit_action(a)
        } else {
            self.lab.k.respond_hold(&hold_id, decision, &decider)
        };
        let grew = self.lab.len() - before;
        let after = self.lab.k.hold(&hold_id)?.state;
        let was_pending = hold.state == HoldState::Pending;
        let (label, expected) = match (&result, after) {
            (Err(_), _) => ("decision_refused", 0),
            (Ok(SubmitOutcome::Committed { .. }), HoldState::Approved) if was_pending => {
                ("approved", if via_action { 2 } else { 1 })
            }
            (Ok(SubmitOutcome::Committed { .. }), HoldState::Rejected) if was_pending => ("rejected_hold", 1),
            (Ok(SubmitOutcome::Rejected { .. }), HoldState::Rejected) if was_pending => ("approve_failed", 1),
            (Ok(SubmitOutcome::Rejected { .. }), _) => ("decision_rejected", 0),
            (Ok(other), state) => {
                self.violation(format!("decision on {hold_id} ({:?}) gave {other:?} with state {state:?}", hold.state));
                ("unexpected", grew)
            }
        };
        self.count(label);
        if grew != expected {
            self.violation(format!("{label} on {hold_id} grew the log by {grew}, expected {expected}"));
        }
        Ok(())
    }

    fn check_energy(&mut self, step: &str) {
        let c = self.lab.k.conservation();
        if !c.holds() {
            self.violation(format!("conservation broken after {step}: {c:?}"));
        }
        let over: Vec<String> = self
            .lab
            .k
            .envelopes()
            .filter(|e| e.consumed + e.reserved + e.delegated > e.budget)
            .map(|e| e.id.clone())
            .collect();
        for e in over {
            self.violation(format!("envelope {e} overdrawn after {step}"));
        }
    }

    fn check_prefix(&mut self) -> Result<()> {
        let now = self.records()?;
        self.report.prefix_checks += 1;
        if now.len() < self.snapshot.len() || now[..self.snapshot.len()] != self.snapshot[..] {
            self.violation(format!("log at size {} is not a prefix of size {}", self.snapshot.len(), now.len()));
        }
        self.snapshot = now;
        Ok(())
    }

    fn check_root(&mut self) -> Result<()> {
        let (scratch, stored) = recompute_root(&self.lab.k)?;
        self.report.root_checks += 1;
        if scratch != stored {
            self.violation(format!("root mismatch at size {}: stored {stored:?}, recomputed {scratch:?}", self.lab.len()));
        }
        Ok(())
    }
}

/// Runs `actions` randomized submissions and decisions with ticks and
/// clock advances interleaved.
pub fn run_fuzz(actions: u64, seed: u64) -> Result<FuzzReport> {
    let start = Instant::now();
    let mut f = Fuzz {
        lab: Lab::new(seed),
        rng: ChaCha8Rng::seed_from_u64(seed),
        envs: Vec::new(),
        holds: Vec::new(),
        report: FuzzReport { seed, ..FuzzReport::default() },
        snapshot: Vec::new(),
    };
    f.setup()?;
    f.check_prefix()?;
    let mut step = 0u64;
    while f.report.actions < actions {
        step += 1;
        // Due holds time out first so each step's log growth is exact.
        let before = f.lab.len();
        let swept = f.lab.k.expire_holds()?.len() as u64;
        *f.report.outcomes.entry("timed_out".into()).or_default() += swept;
        if f.lab.len() - before != swept {
            f.violation(format!("sweep of {swept} holds grew the log by {}", f.lab.len() - before));
        }
        match f.rng.gen_range(0..100) {
            0..=7 => {
                let before = f.lab.len();
                f.lab.tick()?;
                f.report.ticks += 1;
                if f.lab.len() - before != 1 {
                    f.violation("tick did not append exactly one event".into());
                }
            }
            8..=14 => f.lab.clock.advance_secs(f.rng.gen_range(1..45)),
            15..=24 => {
                f.issue()?;
            }
            25..=39 if !f.lab.k.pending_holds().is_empty() || (!f.holds.is_empty() && f.rng.gen_bool(0.1)) => {
                f.decide()?;
                f.report.actions += 1;
            }
            _ => {
                f.submit()?;
                f.report.actions += 1;
            }
        }
        f.check_energy(&format!("step {step}"));
        if step.is_multiple_of(25) {
            f.check_prefix()?;
        }
        if step.is_multiple_of(100) {
            f.check_root()?;
        }
    }
    f.check_prefix()?;
    f.check_root()?;
    f.report.events = f.lab.len();
    f.report.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(f.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sovereign_core::boundary::Pattern;

    #[test]
    fn regex_oracle_agrees_with_known_cases() {
        let cases = [
            ("workspace/docs/*", "workspace/docs/a.md", true),
            ("workspace/docs/*", "workspace/docs/a/b", false),
            ("workspace/**", "workspace", true),
            ("workspace/**", "workspace/a/b/c", true),
            ("**", "a", true),
            ("a/**/b", "a/b", true),
            ("a/**/b", "a/x/y/b", true),
            ("a/**/b", "a/x/y/c", false),
            ("*.md", "notes.md", true),
            ("w/*/x", "w/q/x", true),
            ("w/*/x", "w/x", false),
        ];
        for (p, t, want) in cases {
            assert_eq!(glob_regex(p).is_match(t), want, "{p} vs {t}");
        }
    }

    #[test]
    fn regex_oracle_agrees_with_the_kernel_matcher() {
        let pats = ["**", "a/**", "**/b", "a/**/b", "a/*", "*/b", "a/*x*/b", "a/**/**/c", "*"];
        let targets = ["a", "b", "a/b", "a/x/b", "a/xx/b", "a/b/c", "q/a/b", "a/x/y/c", "x"];
        for p in pats {
            let pat = Pattern::parse(p).unwrap();
            for t in targets {
                assert_eq!(glob_regex(p).is_match(t), pat.matches(t), "{p} vs {t}");
            }
        }
    }

    #[test]
    fn short_fuzz_is_clean() {
        let r = run_fuzz(150, 7).unwrap();
        assert!(r.pass(), "{:#?}", r.violations);
        assert!(r.outcomes.get("committed").copied().unwrap_or(0) > 0);
    }
}
