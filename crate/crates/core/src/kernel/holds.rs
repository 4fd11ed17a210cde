//! Hold lifecycle: trigger, human decision, timeout, and envelope
//! finalization.

use serde_json::{json, Value};

use super::{NewEvent, Tx};
use crate::clock::NANOS_PER_SEC;
use crate::energy::Reservation;
use crate::envelope::{HoldDecision, HoldRequest, HoldState, HOLD_APPROVED, HOLD_RESERVED_COST};
use crate::error::{KernelError, Result};
use crate::model::{Action, ActionType, Actor, ActorId, SubmitOutcome};

fn hold_target(id: &str) -> String {
    format!("ledger/hold/{id}")
}

impl Tx<'_> {
    /// Short-circuit inside validate: quote, reserve on the envelope, record
    /// the request. Nothing else of the pipeline runs.
    pub(super) fn trigger_hold(&mut self, action: Action, env_id: String) -> Result<SubmitOutcome> {
        let cost = self.cfg.costs.quote(action.action_type, &action.payload)?;
        let env = self.st.envelope(&env_id)?;
        let remaining = env.remaining();
        if remaining < cost {
            return Ok(SubmitOutcome::InsufficientEnergy {
                needed: cost,
                available: remaining,
            });
        }
        let timeout = env.hold_timeout_secs;
        self.st.envelope_mut(&env_id)?.reserved += cost;

        let hold_id = self.new_id("h");
        let target = hold_target(&hold_id);
        let event = self.append(NewEvent {
            actor: &action.actor,
            action_type: ActionType::Create,
            target: &target,
            payload: json!({
                "kind": "hold_request",
                "hold_id": hold_id,
                "envelope": env_id,
                "action": {
                    "type": action.action_type,
                    "target": action.target,
                    "payload": action.payload,
                },
                "reserved_cost": cost,
            }),
            artifact_hash: None,
            reserved: cost,
            settled: 0,
        })?;
        self.st.insert_hold(HoldRequest {
            id: hold_id.clone(),
            envelope: env_id,
            original_action: action,
            reserved_cost: cost,
            created_at: event.timestamp,
            timeout_at: timeout.map(|s| event.timestamp.saturating_add(s.saturating_mul(NANOS_PER_SEC))),
            state: HoldState::Pending,
            request_event_seq: event.seq,
            decided_by: None,
            decided_at: None,
            commitment: None,
            result_seq: None,
        });
        Ok(SubmitOutcome::HoldTriggered { hold_id })
    }

    /// A human's `mutate ledger/hold/<id>` submission. Reject commits the
    /// decision as the `hold_response` event; approve commits the replayed
    /// action followed by the decision record.
    pub(super) fn hold_response_action(&mut self, decider: &Actor, action: Action) -> Result<SubmitOutcome> {
        let decision = HoldDecision::from_payload(&action.payload)?;
        let hold_id = action
            .target
            .rsplit('/')
            .next()
            .unwrap_or_default()
            .to_string();
        self.respond_hold(&hold_id, decision, &decider.id, true)
    }

    pub fn respond_hold(
        &mut self,
        hold_id: &str,
        decision: HoldDecision,
        decider: &ActorId,
        record_approval: bool,
    ) -> Result<SubmitOutcome> {
        let hold = self.st.hold(hold_id)?.clone();
        self.authorize_decider(&hold, decider)?;
        if !hold.is_pending() {
            return Err(KernelError::State(format!(
                "hold {hold_id} is already {}",
                serde_json::to_value(hold.state).unwrap().as_str().unwrap_or("decided")
            )));
        }
        match decision {
            HoldDecision::Reject => {
                let event_seq = self.resolve_hold(hold_id, decider, "reject", HoldState::Rejected, None)?;
                let event = self.w.db().event(event_seq)?.expect("just appended");
                Ok(SubmitOutcome::Committed {
                    receipt: event.receipt(),
                })
            }
            HoldDecision::Approve => {
                let outcome = self.approve_hold(&hold, decider)?;
                if let (true, SubmitOutcome::Committed { receipt }) = (record_approval, &outcome) {
                    let target = hold_target(hold_id);
                    self.append(super::NewEvent {
                        actor: decider,
                        action_type: ActionType::Mutate,
                        target: &target,
                        payload: json!({
                            "kind": "hold_approval",
                            "decision": "approve",
                            "hold_id": hold_id,
                            "result_seq": receipt.log_index,
                        }),
                        artifact_hash: None,
                        reserved: 0,
                        settled: 0,
                    })?;
                }
                Ok(outcome)
            }
        }
    }

    /// Root, or a human who issued an envelope on the hold's chain.
    fn authorize_decider(&self, hold: &HoldRequest, decider: &ActorId) -> Result<()> {
        let actor = self.st.actor(decider)?;
        if !actor.is_human() || !actor.is_active_at(self.now) {
            return Err(KernelError::PolicyViolation(format!(
                "{decider} is not an active human and cannot decide holds"
            )));
        }
        if decider.is_root() {
            return Ok(());
        }
        let mut next = Some(hold.envelope.clone());
        while let Some(id) = next {
            let env = self.st.envelope(&id)?;
            if env.issuer == *decider {
                return Ok(());
            }
            next = env.parent.clone();
        }
        Err(KernelError::PolicyViolation(format!(
            "{decider} did not issue the envelope behind hold {}",
            hold.id
        )))
    }

    /// Replays the original action with the guard markers. If the replay
    /// does not commit, the hold settles like a rejection.
    fn approve_hold(&mut self, hold: &HoldRequest, decider: &ActorId) -> Result<SubmitOutcome> {
        let mut replay = hold.original_action.clone();
        if let Value::Object(map) = &mut replay.payload {
            map.insert(HOLD_APPROVED.into(), json!(hold.id));
            map.insert(HOLD_RESERVED_COST.into(), json!(hold.reserved_cost));
        }
        let failure = match self.submit(replay, true) {
            Ok(SubmitOutcome::Committed { receipt }) => {
                let now = self.now;
                let h = self.st.hold_mut(&hold.id)?;
                h.state = HoldState::Approved;
                h.decided_by = Some(decider.clone());
                h.decided_at = Some(now);
                h.result_seq = Some(receipt.log_index);
                return Ok(SubmitOutcome::Committed { receipt });
            }
            Ok(SubmitOutcome::Rejected { reason }) => reason,
            Ok(other) => {
                return Err(KernelError::Consistency(format!("hold replay produced {other:?}")));
            }
            Err(e @ KernelError::Payload { .. }) | Err(e @ KernelError::Encoding(_)) => e.to_string(),
            Err(e) => return Err(e),
        };
        self.resolve_hold(&hold.id, decider, "approve_failed", HoldState::Rejected, Some(&failure))?;
        Ok(SubmitOutcome::Rejected { reason: failure })
    }

    /// Reject and timeout: consume the commitment, release the rest, record
    /// a `hold_response`. Returns the event's seq.
    fn resolve_hold(
        &mut self,
        hold_id: &str,
        decider: &ActorId,
        decision: &str,
        state: HoldState,
        reason: Option<&str>,
    ) -> Result<u64> {
        let hold = self.st.hold(hold_id)?.clone();
        let mut r = Reservation::held(hold.reserved_cost);
        let s = r.settle_commitment(self.rate)?;
        {
            let env = self.st.envelope_mut(&hold.envelope)?;
            env.reserved -= hold.reserved_cost;
            env.consumed += s.consumed;
        }
        self.st.counters_mut().consumed += s.consumed;

        let mut payload = json!({
            "kind": "hold_response",
            "decision": decision,
            "hold_id": hold_id,
            "commitment": s.consumed,
            "released": s.returned,
        });
        if let Some(reason) = reason {
            payload["reason"] = json!(reason);
        }
        let target = hold_target(hold_id);
        let event = self.append(NewEvent {
            actor: decider,
            action_type: ActionType::Mutate,
            target: &target,
            payload,
            artifact_hash: None,
            reserved: hold.reserved_cost,
            settled: s.consumed,
        })?;
        let now = self.now;
        let h = self.st.hold_mut(hold_id)?;
        h.state = state;
        h.decided_by = Some(decider.clone());
        h.decided_at = Some(now);
        h.commitment = Some(s.consumed);
        Ok(event.seq)
    }

    /// Times out due holds (decided by root) and finalizes expired
    /// envelopes. Returns the timed-out hold ids.
    pub fn sweep(&mut self) -> Result<Vec<String>> {
        let due: Vec<String> = self
            .st
            .holds
            .values()
            .filter(|h| h.is_due(self.now))
            .map(|h| h.id.clone())
            .collect();
        let root = ActorId::root();
        for id in &due {
            self.resolve_hold(id, &root, "timeout", HoldState::TimedOut, None)?;
        }
        self.finalize_envelopes()?;
        Ok(due)
    }

    /// Returns unspent budget from expired, quiescent envelopes: to the
    /// parent envelope for delegations, to the issuer's balance otherwise.
    fn finalize_envelopes(&mut self) -> Result<()> {
        loop {
            let ready: Vec<String> = self
                .st
                .envelopes
                .values()
                .filter(|e| !e.finalized && e.is_expired_at(self.now) && e.reserved == 0 && e.delegated == 0)
                .map(|e| e.id.clone())
                .collect();
            if ready.is_empty() {
                return Ok(());
            }
            for id in ready {
                let env = self.st.envelope(&id)?.clone();
                let unspent = env.budget - env.consumed;
                match &env.parent {
                    Some(parent) => {
                        let p = self.st.envelope_mut(parent)?;
                        p.delegated -= env.budget;
                        p.consumed += env.consumed;
                    }
                    None => self.st.balance_mut(&env.issuer).available += unspent,
                }
                self.st.envelope_mut(&id)?.finalized = true;
            }
        }
    }
}
