//! Capability checks over glob-pattern writable targets.
//!
//! Pattern grammar:
//!
//! ```text
//! pattern := segment ("/" segment)*
//! segment := "**" | [a-z0-9_.-*]+      ("**" only as a whole segment)
//! ```
//!
//! `*` matches any run of characters inside one segment, `**` matches zero or
//! more whole segments. Everything not covered by an entry is denied, and the
//! `system/**` and `ledger/**` namespaces are writable only by root.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{is_valid_target, Actor, ActionType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid pattern {pattern:?}: {reason}")]
pub struct PatternError {
    pub pattern: String,
    pub reason: &'static str,
}

/// A validated glob over target paths.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern(String);

impl Pattern {
    pub fn parse(s: &str) -> Result<Pattern, PatternError> {
        let err = |reason| PatternError {
            pattern: s.to_string(),
            reason,
        };
        if s.is_empty() {
            return Err(err("empty pattern"));
        }
        for seg in s.split('/') {
            if seg.is_empty() {
                return Err(err("empty segment"));
            }
            if seg.contains("**") && seg != "**" {
                return Err(err("`**` must be a whole segment"));
            }
            if !seg.bytes().all(|b| {
                b.is_ascii_lowercase() || b.is_ascii_digit() || matches!(b, b'_' | b'.' | b'-' | b'*')
            }) {
                return Err(err("segment characters must be [a-z0-9_.-*]"));
            }
        }
        Ok(Pattern(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn segments(&self) -> Vec<&str> {
        self.0.split('/').collect()
    }

    pub fn matches(&self, target: &str) -> bool {
        let target: Vec<&str> = target.split('/').collect();
        match_segments(&self.segments(), &target)
    }

    /// Structural containment: every target matched by `self` is matched by
    /// `other`. Sound but not complete; undecided cases answer `false`.
    pub fn is_contained_in(&self, other: &Pattern) -> bool {
        contained(&self.segments(), &other.segments())
    }
}

impl fmt::Debug for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pattern({})", self.0)
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Pattern {
    type Err = PatternError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pattern::parse(s)
    }
}

impl Serialize for Pattern {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Pattern {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Pattern::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// `match_pattern` from the capability model.
pub fn match_pattern(pattern: &Pattern, target: &str) -> bool {
    pattern.matches(target)
}

fn match_segments(pat: &[&str], target: &[&str]) -> bool {
    match pat.split_first() {
        None => target.is_empty(),
        Some((&"**", rest)) => (0..=target.len()).any(|skip| match_segments(rest, &target[skip..])),
        Some((seg, rest)) => match target.split_first() {
            Some((t, trest)) => match_segment(seg, t) && match_segments(rest, trest),
            None => false,
        },
    }
}

/// Single-segment wildcard match: `*` is any (possibly empty) run.
fn match_segment(pat: &str, s: &str) -> bool {
    let (p, s) = (pat.as_bytes(), s.as_bytes());
    let (mut pi, mut si) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while si < s.len() {
        if pi < p.len() && p[pi] == b'*' {
            star = Some((pi, si));
            pi += 1;
        } else if pi < p.len() && p[pi] == s[si] {
            pi += 1;
            si += 1;
        } else if let Some((sp, ss)) = star {
            pi = sp + 1;
            si = ss + 1;
            star = Some((sp, ss + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&b| b == b'*')
}

fn contained(inner: &[&str], outer: &[&str]) -> bool {
    match outer.split_first() {
        None => inner.is_empty(),
        Some((&"**", orest)) => {
            // `**` absorbs zero segments, or the next inner segment (including
            // an inner `**`).
            contained(inner, orest) || (!inner.is_empty() && contained(&inner[1..], outer))
        }
        Some((oseg, orest)) => match inner.split_first() {
            None | Some((&"**", _)) => false,
            // Inner stars are treated as literal characters: if the outer
            // segment still matches, each inner run lands inside an outer star.
            Some((iseg, irest)) => match_segment(oseg, iseg) && contained(irest, orest),
        },
    }
}

/// Action component of a writable entry: one type or the `*` wildcard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionMatch {
    Any,
    Only(ActionType),
}

impl ActionMatch {
    pub fn covers(self, t: ActionType) -> bool {
        match self {
            ActionMatch::Any => true,
            ActionMatch::Only(x) => x == t,
        }
    }
}

impl fmt::Display for ActionMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionMatch::Any => f.write_str("*"),
            ActionMatch::Only(t) => f.write_str(t.as_str()),
        }
    }
}

impl FromStr for ActionMatch {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "*" {
            Ok(ActionMatch::Any)
        } else {
            s.parse().map(ActionMatch::Only)
        }
    }
}

impl Serialize for ActionMatch {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ActionMatch {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One `(pattern, action)` capability. Deserializes from the struct form
/// or from `pattern:action` text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct WritableEntry {
    pub pattern: Pattern,
    pub action: ActionMatch,
}

impl WritableEntry {
    pub fn new(pattern: &str, action: ActionMatch) -> Result<Self, PatternError> {
        Ok(WritableEntry {
            pattern: Pattern::parse(pattern)?,
            action,
        })
    }

    pub fn full() -> Self {
        WritableEntry {
            pattern: Pattern("**".into()),
            action: ActionMatch::Any,
        }
    }

    pub fn permits(&self, action: ActionType, target: &str) -> bool {
        self.action.covers(action) && self.pattern.matches(target)
    }
}

/// `pattern:action`, e.g. `workspace/docs/*:mutate` or `**:*`.
impl FromStr for WritableEntry {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (pattern, action) = s
            .rsplit_once(':')
            .ok_or_else(|| format!("expected pattern:action, got {s:?}"))?;
        Ok(WritableEntry {
            pattern: Pattern::parse(pattern).map_err(|e| e.to_string())?,
            action: action.parse()?,
        })
    }
}

impl fmt::Display for WritableEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.pattern, self.action)
    }
}

/// Struct-or-text deserialization for `pattern:action` pairs.
pub(crate) fn struct_or_text<'de, D, T, R>(d: D, from_raw: impl FnOnce(R) -> T) -> Result<T, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr<Err = String>,
    R: serde::de::DeserializeOwned,
{
    match serde_json::Value::deserialize(d)? {
        serde_json::Value::String(s) => s.parse().map_err(serde::de::Error::custom),
        v => serde_json::from_value(v).map(from_raw).map_err(serde::de::Error::custom),
    }
}

impl<'de> Deserialize<'de> for WritableEntry {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            pattern: Pattern,
            action: ActionMatch,
        }
        struct_or_text(d, |r: Raw| WritableEntry { pattern: r.pattern, action: r.action })
    }
}

pub const PRIVILEGED_NAMESPACES: [&str; 2] = ["system/**", "ledger/**"];
const HOLD_RESPONSE_TARGETS: &str = "ledger/hold/*";

pub fn is_privileged_target(target: &str) -> bool {
    PRIVILEGED_NAMESPACES
        .iter()
        .any(|p| Pattern(p.to_string()).matches(target))
}

/// True if every target of `pattern` lies inside a privileged namespace.
pub fn is_privileged_pattern(pattern: &Pattern) -> bool {
    PRIVILEGED_NAMESPACES
        .iter()
        .any(|p| pattern.is_contained_in(&Pattern(p.to_string())))
}

pub fn is_hold_response_target(target: &str) -> bool {
    Pattern(HOLD_RESPONSE_TARGETS.to_string()).matches(target)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    InactiveActor,
    InvalidTarget,
    PrivilegedTarget,
    NoMatchingEntry,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::InactiveActor => "actor is not active",
            RejectReason::InvalidTarget => "malformed target path",
            RejectReason::PrivilegedTarget => "target is in a privileged namespace",
            RejectReason::NoMatchingEntry => "no writable entry matches target and action",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryDecision {
    Validated,
    Rejected(RejectReason),
}

/// Boundary check for `actor` performing `action` on `target` at time `now`.
pub fn check(actor: &Actor, action: ActionType, target: &str, now: u64) -> BoundaryDecision {
    use BoundaryDecision::*;
    if !actor.is_active_at(now) {
        return Rejected(RejectReason::InactiveActor);
    }
    if !is_valid_target(target) {
        return Rejected(RejectReason::InvalidTarget);
    }
    if actor.id.is_root() {
        return Validated;
    }
    if action == ActionType::Observe {
        return Validated;
    }
    if is_privileged_target(target) {
        if action == ActionType::Mutate && actor.is_human() && is_hold_response_target(target) {
            return Validated;
        }
        return Rejected(RejectReason::PrivilegedTarget);
    }
    if actor.writable.iter().any(|e| e.permits(action, target)) {
        Validated
    } else {
        Rejected(RejectReason::NoMatchingEntry)
    }
}

/// True if `(pattern, action)` is covered by a single entry of `set`.
pub fn covered_by(set: &[WritableEntry], pattern: &Pattern, action: ActionType) -> bool {
    set.iter()
        .any(|e| e.action.covers(action) && pattern.is_contained_in(&e.pattern))
}
