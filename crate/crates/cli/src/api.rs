//! Request and response shapes shared by both transports, so a CLI call and
//! an HTTP call with the same parameters reach the kernel identically.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sovereign_core::envelope::HoldDecision;
use sovereign_core::model::{Action, ActionType, ActorId, SubmitOutcome};
use sovereign_core::store::EventFilter;
use sovereign_core::{Kernel, KernelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRequest {
    #[serde(rename = "type")]
    pub action_type: ActionType,
    pub target: String,
    #[serde(default = "empty_object")]
    pub payload: Value,
    #[serde(default)]
    pub envelope: Option<String>,
}

fn empty_object() -> Value {
    json!({})
}

impl ActionRequest {
    pub fn into_action(self, actor: &ActorId) -> Action {
        let mut a = Action::new(actor, self.action_type, &self.target, self.payload);
        if let Some(e) = &self.envelope {
            a = a.under(e);
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRequest {
    pub decision: HoldDecision,
}

/// A hold decision is an ordinary submission: `mutate ledger/hold/<id>`.
pub fn decision_action(decider: &ActorId, hold_id: &str, decision: HoldDecision) -> Action {
    Action::new(
        decider,
        ActionType::Mutate,
        &format!("ledger/hold/{hold_id}"),
        json!({ "decision": decision.as_str() }),
    )
}

/// Event query parameters; bounds are inclusive.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventQuery {
    pub from: Option<u64>,
    pub to: Option<u64>,
    pub actor: Option<String>,
    pub target: Option<String>,
    pub since: Option<u64>,
    pub until: Option<u64>,
    pub limit: Option<u64>,
}

impl EventQuery {
    pub fn filter(&self) -> EventFilter {
        EventFilter {
            from_seq: self.from,
            to_seq: self.to,
            actor: self.actor.clone(),
            target_prefix: self.target.clone(),
            since: self.since,
            until: self.until,
            limit: self.limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: u16, code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError { status, code, message: message.into() }
    }

    pub fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError::new(400, "BAD_REQUEST", message)
    }

    pub fn unauthorized() -> ApiError {
        ApiError::new(401, "UNAUTHORIZED", "missing or unknown bearer token")
    }

    pub fn internal(message: impl Into<String>) -> ApiError {
        ApiError::new(500, "INTERNAL", message)
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl From<KernelError> for ApiError {
    fn from(e: KernelError) -> ApiError {
        let code = e.code();
        let status = match code {
            "POLICY_VIOLATION" => 403,
            "NOT_FOUND" => 404,
            "INSUFFICIENT_ENERGY" => 402,
            "PAYLOAD_ERROR" => 422,
            "STATE_ERROR" => 409,
            "BAD_REQUEST" => 400,
            _ => 500,
        };
        ApiError::new(status, code, e.to_string())
    }
}

/// Success body for committed and held submissions; rejections and
/// shortfalls become errors.
pub fn outcome(out: SubmitOutcome) -> Result<(u16, Value), ApiError> {
    match out {
        SubmitOutcome::Committed { receipt } => Ok((200, json!({ "status": "committed", "receipt": receipt }))),
        SubmitOutcome::HoldTriggered { hold_id } => Ok((202, json!({ "status": "hold_triggered", "hold_id": hold_id }))),
        SubmitOutcome::Rejected { reason } => Err(ApiError::new(403, "REJECTED", reason)),
        SubmitOutcome::InsufficientEnergy { needed, available } => Err(ApiError::new(
            402,
            "INSUFFICIENT_ENERGY",
            format!("action costs {needed}, {available} available"),
        )),
    }
}

pub fn submit(k: &mut Kernel, actor: &ActorId, req: ActionRequest) -> Result<(u16, Value), ApiError> {
    outcome(k.submit_action(req.into_action(actor))?)
}

pub fn decide(k: &mut Kernel, decider: &ActorId, hold_id: &str, decision: HoldDecision) -> Result<(u16, Value), ApiError> {
    outcome(k.submit_action(decision_action(decider, hold_id, decision))?)
}

pub fn status(k: &Kernel) -> Result<Value, ApiError> {
    let c = k.conservation();
    let counters = k.counters();
    Ok(json!({
        "origin": k.config().origin,
        "tree_size": k.tree_size()?,
        "root": k.root()?.map(|d| d.to_hex()),
        "verifier_key": k.verifier_key().to_string(),
        "now": k.now(),
        "actors": k.actors().count(),
        "envelopes": k.envelopes().count(),
        "pending_holds": k.pending_holds().len(),
        "energy": {
            "minted": c.minted,
            "actor_balances": c.actor_balances,
            "envelope_holdings": c.envelope_holdings,
            "consumed": c.consumed,
            "conserved": c.holds(),
            "ticks": counters.ticks,
        },
    }))
}

pub fn events(k: &Kernel, q: &EventQuery) -> Result<Value, ApiError> {
    Ok(json!({ "events": k.read_events(&q.filter())? }))
}
