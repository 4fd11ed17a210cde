//! Envelopes (budgeted delegations) and hold requests.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::boundary::{covered_by, Pattern, WritableEntry};
use crate::error::{KernelError, Result};
use crate::model::{Action, ActionType, ActorId};

pub const HOLD_APPROVED: &str = "_hold_approved";
pub const HOLD_RESERVED_COST: &str = "_hold_reserved_cost";

/// `(pattern, type)` pair that parks matching actions for a human decision.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct HoldRule {
    pub pattern: Pattern,
    pub action: ActionType,
}

impl HoldRule {
    pub fn new(pattern: &str, action: ActionType) -> Result<Self> {
        Ok(HoldRule {
            pattern: Pattern::parse(pattern)?,
            action,
        })
    }

    pub fn matches(&self, action: ActionType, target: &str) -> bool {
        self.action == action && self.pattern.matches(target)
    }
}

/// `pattern:type`, e.g. `workspace/**:execute`.
impl std::str::FromStr for HoldRule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (pattern, action) = s
            .rsplit_once(':')
            .ok_or_else(|| format!("expected pattern:type, got {s:?}"))?;
        Ok(HoldRule {
            pattern: Pattern::parse(pattern).map_err(|e| e.to_string())?,
            action: action.parse()?,
        })
    }
}

impl<'de> Deserialize<'de> for HoldRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            pattern: Pattern,
            action: ActionType,
        }
        crate::boundary::struct_or_text(d, |r: Raw| HoldRule { pattern: r.pattern, action: r.action })
    }
}

/// Issuance request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvelopeSpec {
    pub holder: ActorId,
    pub budget: u64,
    pub targets: Vec<Pattern>,
    pub actions: Vec<ActionType>,
    #[serde(default)]
    pub duration_secs: Option<u64>,
    #[serde(default)]
    pub checkpoint: Option<u64>,
    #[serde(default)]
    pub hold_on: Vec<HoldRule>,
    #[serde(default)]
    pub hold_timeout_secs: Option<u64>,
    /// Envelope to carve this one out of (delegation).
    #[serde(default)]
    pub parent: Option<String>,
}

impl EnvelopeSpec {
    pub fn new(holder: &ActorId, budget: u64, targets: &[&str], actions: &[ActionType]) -> Result<Self> {
        Ok(EnvelopeSpec {
            holder: holder.clone(),
            budget,
            targets: targets.iter().map(|t| Pattern::parse(t)).collect::<std::result::Result<_, _>>()?,
            actions: actions.to_vec(),
            duration_secs: None,
            checkpoint: None,
            hold_on: Vec::new(),
            hold_timeout_secs: None,
            parent: None,
        })
    }

    pub fn hold_on(mut self, rule: HoldRule) -> Self {
        self.hold_on.push(rule);
        self
    }

    pub fn hold_timeout(mut self, secs: u64) -> Self {
        self.hold_timeout_secs = Some(secs);
        self
    }

    pub fn duration(mut self, secs: u64) -> Self {
        self.duration_secs = Some(secs);
        self
    }

    pub fn child_of(mut self, parent: &str) -> Self {
        self.parent = Some(parent.to_string());
        self
    }

    /// Every `(target, action)` pair must be covered by a single entry of `w`.
    pub fn check_subset_of(&self, w: &[WritableEntry]) -> Result<()> {
        for target in &self.targets {
            for &action in &self.actions {
                if !covered_by(w, target, action) {
                    return Err(KernelError::PolicyViolation(format!(
                        "({target}, {action}) is not within the issuer's writable targets"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Reduction check against the parent envelope's remaining authority.
    pub fn check_reduction_of(&self, parent: &Envelope) -> Result<()> {
        for target in &self.targets {
            if !parent.targets.iter().any(|p| target.is_contained_in(p)) {
                return Err(KernelError::PolicyViolation(format!(
                    "target {target} is not within the parent envelope's targets"
                )));
            }
        }
        for action in &self.actions {
            if !parent.actions.contains(action) {
                return Err(KernelError::PolicyViolation(format!(
                    "action {action} is not granted by the parent envelope"
                )));
            }
        }
        if self.budget > parent.remaining() {
            return Err(KernelError::PolicyViolation(format!(
                "budget {} exceeds the parent's remaining {}",
                self.budget,
                parent.remaining()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeState {
    Active,
    Expired,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub id: String,
    pub issuer: ActorId,
    pub holder: ActorId,
    pub budget: u64,
    /// Settled energy, including what finalized children consumed.
    pub consumed: u64,
    /// Energy locked by pending holds.
    pub reserved: u64,
    /// Budget carved out to live child envelopes.
    pub delegated: u64,
    pub targets: Vec<Pattern>,
    pub actions: Vec<ActionType>,
    pub duration_secs: Option<u64>,
    pub expires_at: Option<u64>,
    /// Review mark; stored, not enforced.
    pub checkpoint: Option<u64>,
    pub hold_on: Vec<HoldRule>,
    pub hold_timeout_secs: Option<u64>,
    pub parent: Option<String>,
    pub issued_at: u64,
    /// Set once unspent budget has been returned to the funder.
    pub finalized: bool,
}

impl Envelope {
    pub fn remaining(&self) -> u64 {
        self.budget - self.consumed - self.reserved - self.delegated
    }

    pub fn is_expired_at(&self, now: u64) -> bool {
        self.finalized || self.expires_at.is_some_and(|t| now >= t)
    }

    pub fn state_at(&self, now: u64) -> EnvelopeState {
        if self.is_expired_at(now) {
            EnvelopeState::Expired
        } else if self.remaining() == 0 {
            EnvelopeState::Exhausted
        } else {
            EnvelopeState::Active
        }
    }

    pub fn authorizes(&self, action: ActionType, target: &str) -> bool {
        self.actions.contains(&action) && self.targets.iter().any(|p| p.matches(target))
    }

    /// Hold-rule match. Replays of an approved hold never match again.
    pub fn matches_hold(&self, action: &Action) -> bool {
        if action.payload.get(HOLD_APPROVED).is_some() {
            return false;
        }
        self.hold_on
            .iter()
            .any(|r| r.matches(action.action_type, &action.target))
    }

    /// Energy still owned by the envelope: `budget − consumed − delegated`.
    pub fn held_energy(&self) -> u64 {
        if self.finalized {
            0
        } else {
            self.budget - self.consumed - self.delegated
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldState {
    Pending,
    Approved,
    Rejected,
    TimedOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HoldDecision {
    Approve,
    Reject,
}

impl std::str::FromStr for HoldDecision {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "approve" => Ok(HoldDecision::Approve),
            "reject" => Ok(HoldDecision::Reject),
            other => Err(format!("decision must be approve or reject, got {other:?}")),
        }
    }
}

impl HoldDecision {
    pub fn as_str(self) -> &'static str {
        match self {
            HoldDecision::Approve => "approve",
            HoldDecision::Reject => "reject",
        }
    }

    /// Reads `{"decision": ...}` from a hold-response payload.
    pub fn from_payload(payload: &Value) -> Result<Self> {
        payload
            .get("decision")
            .and_then(Value::as_str)
            .ok_or_else(|| KernelError::payload("decision", "required: \"approve\" or \"reject\""))?
            .parse()
            .map_err(|e: String| KernelError::payload("decision", e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldRequest {
    pub id: String,
    pub envelope: String,
    pub original_action: Action,
    pub reserved_cost: u64,
    pub created_at: u64,
    pub timeout_at: Option<u64>,
    pub state: HoldState,
    pub request_event_seq: u64,
    pub decided_by: Option<ActorId>,
    pub decided_at: Option<u64>,
    /// Commitment consumed on reject or timeout.
    pub commitment: Option<u64>,
    /// Seq of the replayed action on approve.
    pub result_seq: Option<u64>,
}

impl HoldRequest {
    pub fn is_pending(&self) -> bool {
        self.state == HoldState::Pending
    }

    pub fn is_due(&self, now: u64) -> bool {
        self.is_pending() && self.timeout_at.is_some_and(|t| t <= now)
    }
}
