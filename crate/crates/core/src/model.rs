//! Domain vocabulary: actors, actions, events and receipts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::boundary::WritableEntry;
use crate::canonical::{canonical_encode, EncodingError};
use crate::tlog::{self, Digest};

/// Identifier of the built-in root actor.
pub const ROOT: &str = "root";

/// Actor identifier. Doubles as a target path segment, so it follows the
/// segment grammar `[a-z0-9_.-]+`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ActorId(String);

impl TryFrom<String> for ActorId {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        ActorId::new(s)
    }
}

impl From<ActorId> for String {
    fn from(id: ActorId) -> String {
        id.0
    }
}

impl std::borrow::Borrow<str> for ActorId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl ActorId {
    pub fn new(id: impl Into<String>) -> Result<Self, String> {
        let id = id.into();
        if is_valid_segment(&id) {
            Ok(ActorId(id))
        } else {
            Err(format!("invalid actor id {id:?}: expected [a-z0-9_.-]+"))
        }
    }

    pub fn root() -> Self {
        ActorId(ROOT.to_string())
    }

    pub fn is_root(&self) -> bool {
        self.0 == ROOT
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for ActorId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActorId::new(s)
    }
}

pub(crate) fn is_valid_segment(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || matches!(b, b'_' | b'.' | b'-'))
}

/// Checks a concrete target path: `/`-separated segments of `[a-z0-9_.-]+`.
pub fn is_valid_target(target: &str) -> bool {
    !target.is_empty() && target.split('/').all(is_valid_segment)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorKind {
    Human,
    Agent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorStatus {
    Active,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actor {
    pub id: ActorId,
    pub kind: ActorKind,
    pub creator: Option<ActorId>,
    pub purpose: Option<String>,
    /// Expiry in nanoseconds since the epoch; agents only.
    pub expiry: Option<u64>,
    pub share: u64,
    pub status: ActorStatus,
    /// Writable targets, fixed at creation.
    pub writable: Vec<WritableEntry>,
    pub created_at: u64,
}

impl Actor {
    /// Status at `now`: agent expiry is applied lazily, humans never expire.
    pub fn status_at(&self, now: u64) -> ActorStatus {
        match (self.kind, self.expiry) {
            (ActorKind::Agent, Some(exp)) if now >= exp => ActorStatus::Expired,
            _ => self.status,
        }
    }

    pub fn is_active_at(&self, now: u64) -> bool {
        self.status_at(now) == ActorStatus::Active
    }

    pub fn is_human(&self) -> bool {
        self.kind == ActorKind::Human
    }
}

/// Request to register a new actor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActorSpec {
    pub id: ActorId,
    pub kind: ActorKind,
    #[serde(default)]
    pub purpose: Option<String>,
    #[serde(default)]
    pub expiry: Option<u64>,
    #[serde(default = "default_share")]
    pub share: u64,
    #[serde(default)]
    pub writable: Vec<WritableEntry>,
}

fn default_share() -> u64 {
    1
}

impl ActorSpec {
    pub fn human(id: &str, writable: Vec<WritableEntry>) -> Self {
        ActorSpec {
            id: ActorId::new(id).expect("valid actor id"),
            kind: ActorKind::Human,
            purpose: None,
            expiry: None,
            share: 1,
            writable,
        }
    }

    pub fn agent(id: &str, purpose: &str, writable: Vec<WritableEntry>) -> Self {
        ActorSpec {
            id: ActorId::new(id).expect("valid actor id"),
            kind: ActorKind::Agent,
            purpose: Some(purpose.to_string()),
            expiry: None,
            share: 1,
            writable,
        }
    }

    pub fn with_share(mut self, share: u64) -> Self {
        self.share = share;
        self
    }

    pub fn with_expiry(mut self, expiry: u64) -> Self {
        self.expiry = Some(expiry);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionType {
    Observe,
    Create,
    Mutate,
    Execute,
}

impl ActionType {
    pub const ALL: [ActionType; 4] = [
        ActionType::Observe,
        ActionType::Create,
        ActionType::Mutate,
        ActionType::Execute,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionType::Observe => "observe",
            ActionType::Create => "create",
            ActionType::Mutate => "mutate",
            ActionType::Execute => "execute",
        }
    }

    pub fn is_state_changing(self) -> bool {
        self != ActionType::Observe
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "observe" => Ok(ActionType::Observe),
            "create" => Ok(ActionType::Create),
            "mutate" => Ok(ActionType::Mutate),
            "execute" => Ok(ActionType::Execute),
            other => Err(format!("unknown action type {other:?}")),
        }
    }
}

/// An action submitted to the kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub actor: ActorId,
    #[serde(rename = "type")]
    pub action_type: ActionType,
    pub target: String,
    #[serde(default = "empty_object")]
    pub payload: Value,
    /// Submission time, nanoseconds since the epoch.
    pub timestamp: u64,
    #[serde(default)]
    pub envelope: Option<String>,
}

fn empty_object() -> Value {
    json!({})
}

impl Action {
    pub fn new(actor: &ActorId, action_type: ActionType, target: &str, payload: Value) -> Self {
        Action {
            actor: actor.clone(),
            action_type,
            target: target.to_string(),
            payload,
            timestamp: 1,
            envelope: None,
        }
    }

    pub fn under(mut self, envelope: &str) -> Self {
        self.envelope = Some(envelope.to_string());
        self
    }

    pub fn at(mut self, timestamp: u64) -> Self {
        self.timestamp = timestamp;
        self
    }
}

/// One committed log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub id: String,
    pub seq: u64,
    pub actor: ActorId,
    #[serde(rename = "type")]
    pub action_type: ActionType,
    pub target: String,
    pub payload: Value,
    pub payload_hash: Digest,
    pub timestamp: u64,
    pub artifact_hash: Option<Digest>,
    pub reserved_energy: u64,
    pub settled_energy: u64,
    pub event_hash: Digest,
}

impl Event {
    /// Canonical encoding of the hashed fields as a fixed-order array.
    fn hashed_fields(&self) -> Result<Vec<u8>, EncodingError> {
        let fields = json!([
            self.id,
            self.seq,
            self.actor.as_str(),
            self.action_type.as_str(),
            self.target,
            self.payload,
            self.payload_hash.to_hex(),
            self.timestamp,
            self.artifact_hash.map(|d| d.to_hex()),
            self.reserved_energy,
            self.settled_energy,
        ]);
        canonical_encode(&fields)
    }

    /// `0x00 ∥ canonical(fields)`; `event_hash` itself is excluded.
    pub fn preimage(&self) -> Result<Vec<u8>, EncodingError> {
        let body = self.hashed_fields()?;
        let mut out = Vec::with_capacity(body.len() + 1);
        out.push(tlog::LEAF_PREFIX);
        out.extend_from_slice(&body);
        Ok(out)
    }

    /// Recomputes the event hash (the RFC 6962 leaf hash) from the fields.
    pub fn compute_hash(&self) -> Result<Digest, EncodingError> {
        Ok(tlog::leaf_hash(&self.hashed_fields()?))
    }

    pub fn compute_payload_hash(payload: &Value) -> Result<Digest, EncodingError> {
        Ok(Digest::sha256(&canonical_encode(payload)?))
    }

    /// Full record as a canonical JSON line (all twelve fields).
    pub fn to_canonical_json(&self) -> Result<Vec<u8>, EncodingError> {
        canonical_encode(&serde_json::to_value(self).expect("event serializes"))
    }

    pub fn receipt(&self) -> Receipt {
        Receipt {
            event_id: self.id.clone(),
            log_index: self.seq,
            event_hash: self.event_hash,
        }
    }

    pub fn leaf_index(&self) -> u64 {
        self.seq - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub event_id: String,
    pub log_index: u64,
    pub event_hash: Digest,
}

/// The four possible results of a submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SubmitOutcome {
    Committed { receipt: Receipt },
    HoldTriggered { hold_id: String },
    Rejected { reason: String },
    InsufficientEnergy { needed: u64, available: u64 },
}

impl SubmitOutcome {
    pub fn receipt(&self) -> Option<&Receipt> {
        match self {
            SubmitOutcome::Committed { receipt } => Some(receipt),
            _ => None,
        }
    }

    pub fn is_committed(&self) -> bool {
        matches!(self, SubmitOutcome::Committed { .. })
    }

    pub fn is_rejected(&self) -> bool {
        matches!(self, SubmitOutcome::Rejected { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(payload: Value, artifact: Option<Digest>) -> Event {
        let payload_hash = Event::compute_payload_hash(&payload).unwrap();
        let mut e = Event {
            id: "00000000-0000-4000-8000-000000000001".into(),
            seq: 1,
            actor: ActorId::new("bot1").unwrap(),
            action_type: ActionType::Mutate,
            target: "workspace/docs/a.md".into(),
            payload,
            payload_hash,
            timestamp: 42,
            artifact_hash: artifact,
            reserved_energy: 15,
            settled_energy: 15,
            event_hash: Digest::ZERO,
        };
        e.event_hash = e.compute_hash().unwrap();
        e
    }

    #[test]
    fn preimage_starts_with_leaf_prefix() {
        let e = sample(json!({"a": 1}), None);
        let pre = e.preimage().unwrap();
        assert_eq!(pre[0], 0x00);
        assert_eq!(Digest::sha256(&pre), e.event_hash);
    }

    #[test]
    fn payload_changes_preimage() {
        let a = sample(json!({"a": 1}), None);
        let b = sample(json!({"a": 2}), None);
        assert_ne!(a.preimage().unwrap(), b.preimage().unwrap());
        assert_ne!(a.event_hash, b.event_hash);
    }

    #[test]
    fn artifact_slot_differs_between_absent_and_present() {
        let absent = sample(json!({}), None);
        let present = sample(json!({}), Some(Digest::sha256(b"out")));
        let a = String::from_utf8(absent.preimage().unwrap()[1..].to_vec()).unwrap();
        let p = String::from_utf8(present.preimage().unwrap()[1..].to_vec()).unwrap();
        let fields_a: Vec<Value> = serde_json::from_str(&a).unwrap();
        let fields_p: Vec<Value> = serde_json::from_str(&p).unwrap();
        assert_eq!(fields_a.len(), 11);
        for i in 0..11 {
            if i == 8 {
                assert_eq!(fields_a[i], Value::Null);
                assert_eq!(fields_p[i], json!(Digest::sha256(b"out").to_hex()));
            } else {
                assert_eq!(fields_a[i], fields_p[i], "slot {i}");
            }
        }
    }

    #[test]
    fn canonical_json_round_trips() {
        let e = sample(json!({"z": [1, 2], "a": "x"}), Some(Digest::sha256(b"o")));
        let line = e.to_canonical_json().unwrap();
        let back: Event = serde_json::from_slice(&line).unwrap();
        assert_eq!(back, e);
        assert_eq!(back.compute_hash().unwrap(), e.event_hash);
    }

    #[test]
    fn actor_ids_follow_segment_grammar() {
        assert!(ActorId::new("bot-1.a_b").is_ok());
        assert!(ActorId::new("").is_err());
        assert!(ActorId::new("Alice").is_err());
        assert!(ActorId::new("a/b").is_err());
    }

    #[test]
    fn targets_follow_grammar() {
        assert!(is_valid_target("workspace/docs/a.md"));
        assert!(!is_valid_target("workspace//a"));
        assert!(!is_valid_target("/abs"));
        assert!(!is_valid_target("Work"));
    }
}
