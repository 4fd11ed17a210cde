//! `submit_action`: validate → quote → reserve → validate_payload → settle
//! → append → receipt.

use serde_json::{json, Value};

use super::{NewEvent, Tx};
use crate::boundary::{self, is_hold_response_target, BoundaryDecision};
use crate::canonical::{canonical_encode, normalize};
use crate::energy::Reservation;
use crate::envelope::{HOLD_APPROVED, HOLD_RESERVED_COST};
use crate::error::{KernelError, Result};
use crate::model::{Action, ActionType, Actor, ActorId, ActorKind, SubmitOutcome};
use crate::tlog::Digest;

const OID_PREFIX: &str = "sha256:";

/// Parses `sha256:<64 lowercase hex>`.
pub fn parse_oid(s: &str) -> Option<Digest> {
    let hex = s.strip_prefix(OID_PREFIX)?;
    if hex.len() != 64 || !hex.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        return None;
    }
    Digest::from_hex(hex)
}

fn require_oid(payload: &Value, field: &str) -> Result<Digest> {
    let v = payload
        .get(field)
        .ok_or_else(|| KernelError::payload(field, "required"))?;
    let s = v
        .as_str()
        .ok_or_else(|| KernelError::payload(field, "must be a string"))?;
    parse_oid(s).ok_or_else(|| KernelError::payload(field, "must be sha256: followed by 64 lowercase hex characters"))
}

/// Step 4. Returns the artifact hash echoed by Execute payloads.
pub fn validate_payload(action_type: ActionType, payload: &Value) -> Result<Option<Digest>> {
    match action_type {
        ActionType::Execute => {
            require_oid(payload, "input_oid")?;
            require_oid(payload, "output_oid")?;
            match payload.get("exit_code") {
                None => return Err(KernelError::payload("exit_code", "required")),
                Some(v) if v.as_i64().is_none() => {
                    return Err(KernelError::payload("exit_code", "must be an integer"))
                }
                _ => {}
            }
            if let Some(v) = payload.get("output_bytes") {
                if v.as_u64().is_none() {
                    return Err(KernelError::payload("output_bytes", "must be a non-negative integer"));
                }
            }
            require_oid(payload, "artifact_hash").map(Some)
        }
        ActionType::Mutate => {
            if payload.get("content_oid").is_some() {
                require_oid(payload, "content_oid")?;
            }
            Ok(None)
        }
        ActionType::Create | ActionType::Observe => Ok(None),
    }
}

/// True for a human's `mutate ledger/hold/<id>` decision.
pub(crate) fn is_hold_response(action: &Action) -> bool {
    action.action_type == ActionType::Mutate && is_hold_response_target(&action.target)
}

/// Where the energy for an action comes from.
#[derive(Clone)]
enum Funding {
    Actor(ActorId),
    Envelope(String),
}

impl Tx<'_> {
    pub fn submit(&mut self, mut action: Action, internal: bool) -> Result<SubmitOutcome> {
        if !action.payload.is_object() {
            return Err(KernelError::payload("payload", "must be a JSON object"));
        }
        action.payload = normalize(&action.payload)?;
        let size = canonical_encode(&action.payload)?.len();
        if size > self.cfg.max_payload_bytes {
            return Err(KernelError::payload(
                "payload",
                format!("{size} bytes exceeds the {} byte limit", self.cfg.max_payload_bytes),
            ));
        }

        // 1. Validate
        let replay_cost = if internal { replay_cost(&action.payload)? } else { None };
        if !internal && (action.payload.get(HOLD_APPROVED).is_some() || action.payload.get(HOLD_RESERVED_COST).is_some())
        {
            return self.reject(&action, "payload uses a reserved replay marker");
        }
        let actor = match self.st.actors.get(&action.actor) {
            Some(a) => a.clone(),
            None => return self.reject(&action, &format!("unknown actor {}", action.actor)),
        };
        if let BoundaryDecision::Rejected(why) = boundary::check(&actor, action.action_type, &action.target, self.now) {
            return self.reject(&action, &why.to_string());
        }
        if is_hold_response(&action) && actor.is_human() && !internal {
            return self.hold_response_action(&actor, action);
        }
        let funding = match self.authorize_envelope(&actor, &action) {
            Ok(f) => f,
            Err(reason) => return self.reject(&action, &reason),
        };
        if let Funding::Envelope(env_id) = &funding {
            if replay_cost.is_none() && self.st.envelope(env_id)?.matches_hold(&action) {
                return self.trigger_hold(action, env_id.clone());
            }
        }

        // 2. Quote
        let cost = match replay_cost {
            Some(c) => c,
            None => self.cfg.costs.quote(action.action_type, &action.payload)?,
        };

        // 3. Reserve
        let mut reservation = match (&funding, replay_cost) {
            (Funding::Envelope(env_id), Some(_)) => {
                // Phantom: the energy was locked when the hold triggered.
                let env = self.st.envelope(env_id)?;
                if env.reserved < cost {
                    return Err(KernelError::Consistency(format!(
                        "replay of {cost} against envelope {env_id} holding only {} reserved",
                        env.reserved
                    )));
                }
                Reservation::held(cost)
            }
            (Funding::Actor(_), Some(_)) => {
                return Err(KernelError::Consistency("hold replay without an envelope".into()));
            }
            (f, None) => {
                let available = self.funding_available(f)?;
                if available < cost {
                    return Ok(SubmitOutcome::InsufficientEnergy {
                        needed: cost,
                        available,
                    });
                }
                self.lock(f, cost)?;
                Reservation::held(cost)
            }
        };

        // 4. Validate payload
        let artifact_hash = match validate_payload(action.action_type, &action.payload) {
            Ok(a) => a,
            Err(e) => {
                reservation.release()?;
                if replay_cost.is_none() {
                    self.unlock(&funding, cost)?;
                }
                return Err(e);
            }
        };

        // 5. Settle
        let settled = reservation.settle(cost)?;
        self.consume(&funding, settled.consumed)?;

        // 6. Append
        let event = self.append(NewEvent {
            actor: &action.actor,
            action_type: action.action_type,
            target: &action.target,
            payload: action.payload,
            artifact_hash,
            reserved: cost,
            settled: settled.consumed,
        })?;

        // 7. Receipt
        Ok(SubmitOutcome::Committed {
            receipt: event.receipt(),
        })
    }

    /// Envelope authorization. Agents need an envelope for state-changing
    /// actions; without one, energy comes from the actor's own balance.
    fn authorize_envelope(&self, actor: &Actor, action: &Action) -> std::result::Result<Funding, String> {
        let Some(env_id) = &action.envelope else {
            if actor.kind == ActorKind::Agent && action.action_type.is_state_changing() {
                return Err("state-changing agent actions require an envelope".into());
            }
            return Ok(Funding::Actor(actor.id.clone()));
        };
        let env = self
            .st
            .envelopes
            .get(env_id)
            .ok_or_else(|| format!("unknown envelope {env_id}"))?;
        if env.holder != actor.id {
            return Err(format!("envelope {env_id} is not held by {}", actor.id));
        }
        if env.is_expired_at(self.now) {
            return Err(format!("envelope {env_id} has expired"));
        }
        if action.action_type.is_state_changing() && !env.authorizes(action.action_type, &action.target) {
            return Err(format!(
                "envelope {env_id} does not authorize {} on {}",
                action.action_type, action.target
            ));
        }
        Ok(Funding::Envelope(env_id.clone()))
    }

    fn funding_available(&self, f: &Funding) -> Result<u64> {
        Ok(match f {
            Funding::Actor(id) => self.st.balance(id).available,
            Funding::Envelope(id) => self.st.envelope(id)?.remaining(),
        })
    }

    fn lock(&mut self, f: &Funding, amount: u64) -> Result<()> {
        match f {
            Funding::Actor(id) => {
                let b = self.st.balance_mut(id);
                b.available -= amount;
                b.reserved += amount;
            }
            Funding::Envelope(id) => self.st.envelope_mut(id)?.reserved += amount,
        }
        Ok(())
    }

    fn unlock(&mut self, f: &Funding, amount: u64) -> Result<()> {
        match f {
            Funding::Actor(id) => {
                let b = self.st.balance_mut(id);
                b.reserved -= amount;
                b.available += amount;
            }
            Funding::Envelope(id) => self.st.envelope_mut(id)?.reserved -= amount,
        }
        Ok(())
    }

    /// Moves `amount` from reserved to consumed.
    fn consume(&mut self, f: &Funding, amount: u64) -> Result<()> {
        match f {
            Funding::Actor(id) => self.st.balance_mut(id).reserved -= amount,
            Funding::Envelope(id) => {
                let env = self.st.envelope_mut(id)?;
                env.reserved -= amount;
                env.consumed += amount;
            }
        }
        self.st.counters_mut().consumed += amount;
        Ok(())
    }

    /// Validate-step rejection. Logged only when `log_rejections` is set.
    pub(super) fn reject(&mut self, action: &Action, reason: &str) -> Result<SubmitOutcome> {
        if self.cfg.log_rejections {
            let by = if self.st.actors.contains_key(&action.actor) {
                action.actor.clone()
            } else {
                ActorId::root()
            };
            self.append(NewEvent {
                actor: &by,
                action_type: ActionType::Observe,
                target: "ledger/rejections",
                payload: json!({
                    "kind": "rejection",
                    "actor": action.actor,
                    "type": action.action_type,
                    "target": action.target,
                    "reason": reason,
                }),
                artifact_hash: None,
                reserved: 0,
                settled: 0,
            })?;
        }
        Ok(SubmitOutcome::Rejected {
            reason: reason.to_string(),
        })
    }
}

fn replay_cost(payload: &Value) -> Result<Option<u64>> {
    match (payload.get(HOLD_APPROVED), payload.get(HOLD_RESERVED_COST)) {
        (None, None) => Ok(None),
        (Some(_), Some(c)) => c
            .as_u64()
            .map(Some)
            .ok_or_else(|| KernelError::Consistency("replay marker cost is not an integer".into())),
        _ => Err(KernelError::Consistency("incomplete replay markers".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEX: &str = "0123456789abcdef0123456789abcdef0123456789abcdef0123456789abcdef";

    fn oid() -> String {
        format!("sha256:{HEX}")
    }

    #[test]
    fn oids() {
        assert!(parse_oid(&oid()).is_some());
        assert!(parse_oid("sha256:XYZ").is_none());
        assert!(parse_oid(&format!("sha256:{}", &HEX[1..])).is_none());
        assert!(parse_oid(&format!("sha256:{}", HEX.to_uppercase())).is_none());
        assert!(parse_oid(&format!("md5:{HEX}")).is_none());
    }

    #[test]
    fn execute_schema() {
        let ok = json!({"input_oid": oid(), "output_oid": oid(), "exit_code": 0, "artifact_hash": oid()});
        assert_eq!(
            validate_payload(ActionType::Execute, &ok).unwrap(),
            Some(Digest::from_hex(HEX).unwrap())
        );
        let mut missing = ok.clone();
        missing.as_object_mut().unwrap().remove("exit_code");
        let err = validate_payload(ActionType::Execute, &missing).unwrap_err();
        assert!(matches!(err, KernelError::Payload { ref field, .. } if field == "exit_code"));

        let mut bad = ok.clone();
        bad["input_oid"] = json!("sha256:XYZ");
        let err = validate_payload(ActionType::Execute, &bad).unwrap_err();
        assert!(matches!(err, KernelError::Payload { ref field, .. } if field == "input_oid"));

        let mut neg = ok.clone();
        neg["exit_code"] = json!(-9);
        assert!(validate_payload(ActionType::Execute, &neg).is_ok());
        neg["exit_code"] = json!("0");
        assert!(validate_payload(ActionType::Execute, &neg).is_err());
    }

    #[test]
    fn mutate_content_oid_is_optional_but_checked() {
        assert!(validate_payload(ActionType::Mutate, &json!({})).unwrap().is_none());
        assert!(validate_payload(ActionType::Mutate, &json!({"content_oid": oid()})).is_ok());
        assert!(validate_payload(ActionType::Mutate, &json!({"content_oid": "nope"})).is_err());
        assert!(validate_payload(ActionType::Create, &json!({"anything": [1, 2]})).is_ok());
    }
}
