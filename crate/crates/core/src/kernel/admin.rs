//! Registration, envelope issuance and energy production.

use serde_json::{json, Map, Value};

use super::{NewEvent, Tx};
use crate::boundary::covered_by;
use crate::clock::NANOS_PER_SEC;
use crate::energy::allocate;
use crate::envelope::{Envelope, EnvelopeSpec};
use crate::error::{KernelError, Result};
use crate::model::{ActionType, Actor, ActorId, ActorKind, ActorSpec, ActorStatus, Event};

impl Tx<'_> {
    pub fn register_actor(&mut self, spec: ActorSpec, requester: &ActorId) -> Result<Actor> {
        let req = self.st.actor(requester)?.clone();
        if !req.is_active_at(self.now) {
            return Err(KernelError::PolicyViolation(format!("requester {requester} is not active")));
        }
        if self.st.actors.contains_key(&spec.id) {
            return Err(KernelError::DuplicateActor(spec.id.to_string()));
        }
        if spec.share == 0 {
            return Err(KernelError::payload("share", "must be at least 1"));
        }
        let creator = match spec.kind {
            ActorKind::Agent => {
                if !req.is_human() {
                    return Err(KernelError::PolicyViolation(format!(
                        "agent {requester} cannot create agents; only humans may"
                    )));
                }
                if spec.purpose.as_deref().is_none_or(|p| p.trim().is_empty()) {
                    return Err(KernelError::payload("purpose", "required for agents"));
                }
                Some(requester.clone())
            }
            ActorKind::Human => {
                if !requester.is_root() {
                    return Err(KernelError::PolicyViolation("only root may register humans".into()));
                }
                if spec.expiry.is_some() {
                    return Err(KernelError::payload("expiry", "humans do not expire"));
                }
                None
            }
        };
        // Authority never widens at creation: each entry must be covered by
        // one of the creator's own entries.
        if !requester.is_root() {
            for entry in &spec.writable {
                let actions: Vec<ActionType> = ActionType::ALL
                    .into_iter()
                    .filter(|t| entry.action.covers(*t))
                    .collect();
                if actions.iter().any(|&t| !covered_by(&req.writable, &entry.pattern, t)) {
                    return Err(KernelError::PolicyViolation(format!(
                        "writable entry {entry} exceeds {requester}'s own writable targets"
                    )));
                }
            }
        }
        let actor = Actor {
            id: spec.id.clone(),
            kind: spec.kind,
            creator,
            purpose: spec.purpose,
            expiry: spec.expiry,
            share: spec.share,
            status: ActorStatus::Active,
            writable: spec.writable,
            created_at: self.now,
        };
        let root = ActorId::root();
        let target = format!("system/actors/{}", actor.id);
        self.append(NewEvent {
            actor: &root,
            action_type: ActionType::Create,
            target: &target,
            payload: json!({
                "kind": "actor_registered",
                "actor": actor,
                "requested_by": requester,
            }),
            artifact_hash: None,
            reserved: 0,
            settled: 0,
        })?;
        self.st.insert_actor(actor.clone());
        Ok(actor)
    }

    pub fn issue_envelope(&mut self, issuer_id: &ActorId, spec: EnvelopeSpec) -> Result<Envelope> {
        let issuer = self.st.actor(issuer_id)?.clone();
        if !issuer.is_active_at(self.now) {
            return Err(KernelError::PolicyViolation(format!("issuer {issuer_id} is not active")));
        }
        let holder = self.st.actor(&spec.holder)?.clone();
        if holder.kind != ActorKind::Agent || !holder.is_active_at(self.now) {
            return Err(KernelError::PolicyViolation(format!(
                "envelope holder {} must be an active agent",
                holder.id
            )));
        }
        if spec.targets.is_empty() || spec.actions.is_empty() {
            return Err(KernelError::payload("targets", "targets and actions must be non-empty"));
        }

        let id = self.new_id("e");
        let mut expires_at = spec
            .duration_secs
            .map(|s| self.now.saturating_add(s.saturating_mul(NANOS_PER_SEC)));
        let mut hold_on = spec.hold_on.clone();
        let mut hold_timeout_secs = spec.hold_timeout_secs;

        match &spec.parent {
            Some(parent_id) => {
                let parent = self.st.envelope(parent_id)?.clone();
                if parent.holder != *issuer_id {
                    return Err(KernelError::PolicyViolation(format!(
                        "{issuer_id} does not hold envelope {parent_id}"
                    )));
                }
                if parent.is_expired_at(self.now) {
                    return Err(KernelError::PolicyViolation(format!("envelope {parent_id} has expired")));
                }
                spec.check_reduction_of(&parent)?;
                // A child never outlives its parent and inherits its hold
                // rules, so delegation cannot route around an approval.
                expires_at = match (expires_at, parent.expires_at) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
                for rule in &parent.hold_on {
                    if !hold_on.contains(rule) {
                        hold_on.push(rule.clone());
                    }
                }
                hold_timeout_secs = hold_timeout_secs.or(parent.hold_timeout_secs);
                self.st.envelope_mut(parent_id)?.delegated += spec.budget;
            }
            None => {
                if !issuer.is_human() {
                    return Err(KernelError::PolicyViolation(
                        "agents may only delegate from an envelope they hold".into(),
                    ));
                }
                spec.check_subset_of(&issuer.writable)?;
                let available = self.st.balance(issuer_id).available;
                if available < spec.budget {
                    return Err(KernelError::InsufficientEnergy {
                        needed: spec.budget,
                        available,
                    });
                }
                self.st.balance_mut(issuer_id).available -= spec.budget;
            }
        }

        let env = Envelope {
            id: id.clone(),
            issuer: issuer_id.clone(),
            holder: spec.holder.clone(),
            budget: spec.budget,
            consumed: 0,
            reserved: 0,
            delegated: 0,
            targets: spec.targets,
            actions: spec.actions,
            duration_secs: spec.duration_secs,
            expires_at,
            checkpoint: spec.checkpoint,
            hold_on,
            hold_timeout_secs,
            parent: spec.parent,
            issued_at: self.now,
            finalized: false,
        };
        let target = format!("ledger/envelopes/{id}");
        self.append(NewEvent {
            actor: issuer_id,
            action_type: ActionType::Create,
            target: &target,
            payload: json!({"kind": "envelope_issued", "envelope": env}),
            artifact_hash: None,
            reserved: 0,
            settled: 0,
        })?;
        self.st.insert_envelope(env.clone());
        Ok(env)
    }

    /// Credits every active actor its share of `λ·Δt` and records one
    /// production event.
    pub fn tick(&mut self) -> Result<Event> {
        let interval = self.cfg.capacity.tick_interval_ns();
        if let Some(last) = self.st.counters.last_tick {
            if self.now < last.saturating_add(interval) {
                return Err(KernelError::State(format!(
                    "tick interval not elapsed ({} ns remaining)",
                    last + interval - self.now
                )));
            }
        }
        let produced = self.cfg.capacity.produce_per_tick();
        let shares: Vec<(ActorId, u64)> = self
            .st
            .actors
            .values()
            .filter(|a| a.is_active_at(self.now))
            .map(|a| (a.id.clone(), a.share))
            .collect();
        let credits = allocate(produced, &shares);
        let mut minted = 0;
        let mut credit_doc = Map::new();
        for (id, amount) in &credits {
            self.st.balance_mut(id).available += amount;
            minted += amount;
            credit_doc.insert(id.to_string(), json!(amount));
        }
        let now = self.now;
        let counters = self.st.counters_mut();
        counters.minted += minted;
        counters.ticks += 1;
        counters.last_tick = Some(now);
        let tick_no = counters.ticks;
        let root = ActorId::root();
        self.append(NewEvent {
            actor: &root,
            action_type: ActionType::Observe,
            target: "ledger/energy/production",
            payload: json!({
                "kind": "production",
                "tick": tick_no,
                "produced": produced,
                "minted": minted,
                "credits": Value::Object(credit_doc),
            }),
            artifact_hash: None,
            reserved: 0,
            settled: 0,
        })
    }
}
