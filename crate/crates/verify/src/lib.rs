//! Independent verifier for exported audit packages.
//!
//! Uses only the package bytes and a trusted checkpoint key. Canonical
//! encoding, hashing, proof checking and note parsing are implemented here
//! from the published formats and share no code with the kernel.

pub mod canonical;
pub mod merkle;
pub mod note;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use merkle::Hash;
pub use note::{parse_key, parse_note, Note, TrustedKey};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofJson {
    pub leaf_index: u64,
    pub tree_size: u64,
    pub path: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyJson {
    pub old_size: u64,
    pub new_size: u64,
    pub path: Vec<String>,
}

/// Raw package contents, before any checking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Package {
    pub events_jsonl: String,
    pub proofs: Vec<ProofJson>,
    pub checkpoint: String,
    #[serde(default)]
    pub prior_checkpoint: Option<String>,
    #[serde(default)]
    pub consistency: Option<ConsistencyJson>,
}

impl Package {
    /// Reads a package directory, or a single JSON bundle file with the
    /// same fields.
    pub fn load(path: &Path) -> Result<Package, String> {
        if path.is_dir() {
            Package::read_dir(path)
        } else {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: not a package bundle: {e}", path.display()))
        }
    }

    pub fn read_dir(dir: &Path) -> Result<Package, String> {
        let read = |name: &str| std::fs::read_to_string(dir.join(name)).map_err(|e| format!("{name}: {e}"));
        let optional = |name: &str| -> Result<Option<String>, String> {
            let p = dir.join(name);
            if p.exists() {
                read(name).map(Some)
            } else {
                Ok(None)
            }
        };
        let proofs = serde_json::from_str(&read("proofs.json")?).map_err(|e| format!("proofs.json: {e}"))?;
        let consistency = optional("consistency.json")?
            .map(|t| serde_json::from_str(&t).map_err(|e| format!("consistency.json: {e}")))
            .transpose()?;
        Ok(Package {
            events_jsonl: read("events.jsonl")?,
            proofs,
            checkpoint: read("checkpoint")?,
            prior_checkpoint: optional("prior_checkpoint")?,
            consistency,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EventReport {
    /// 1-based line in events.jsonl.
    pub line: usize,
    pub seq: Option<u64>,
    pub ok: bool,
    pub problems: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Check {
    pub ok: bool,
    pub detail: String,
}

impl Check {
    fn pass(detail: impl Into<String>) -> Check {
        Check { ok: true, detail: detail.into() }
    }

    fn fail(detail: impl Into<String>) -> Check {
        Check { ok: false, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub tree_size: Option<u64>,
    pub events: Vec<EventReport>,
    pub checkpoint: Check,
    pub consistency: Option<Check>,
    /// Problems with the package as a whole (counts, ordering).
    pub structure: Vec<String>,
    pub ok: bool,
}

impl VerificationReport {
    pub fn failing_events(&self) -> impl Iterator<Item = &EventReport> {
        self.events.iter().filter(|e| !e.ok)
    }

    pub fn passed_events(&self) -> usize {
        self.events.iter().filter(|e| e.ok).count()
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |ok| if ok { "ok  " } else { "FAIL" };
        writeln!(f, "{} checkpoint: {}", mark(self.checkpoint.ok), self.checkpoint.detail)?;
        if let Some(c) = &self.consistency {
            writeln!(f, "{} consistency: {}", mark(c.ok), c.detail)?;
        }
        for s in &self.structure {
            writeln!(f, "FAIL package: {s}")?;
        }
        for e in self.failing_events() {
            let seq = e.seq.map_or("?".to_string(), |s| s.to_string());
            writeln!(f, "FAIL event seq {seq} (line {}): {}", e.line, e.problems.join("; "))?;
        }
        writeln!(f, "events: {}/{} verified", self.passed_events(), self.events.len())?;
        write!(f, "verdict: {}", if self.ok { "PASS" } else { "FAIL" })
    }
}

fn hex32(s: &str) -> Option<Hash> {
    hex::decode(s).ok()?.try_into().ok()
}

fn short(h: &[u8]) -> String {
    format!("{}…", &hex::encode(h)[..4])
}

const FIELDS: [&str; 12] = [
    "id",
    "seq",
    "actor",
    "type",
    "target",
    "payload",
    "payload_hash",
    "timestamp",
    "artifact_hash",
    "reserved_energy",
    "settled_energy",
    "event_hash",
];

/// Leaf hash of an event: 0x00 ∥ canonical array of the eleven hashed
/// fields in their fixed order.
pub fn event_leaf(event: &Value) -> Result<Hash, String> {
    let fields: Vec<Value> = FIELDS[..11].iter().map(|k| event[*k].clone()).collect();
    Ok(merkle::leaf_hash(canonical::encode(&json!(fields))?.as_bytes()))
}

fn check_event(line_no: usize, line: &str, proof: Option<&ProofJson>, root: Option<&Hash>, size: u64) -> EventReport {
    let mut problems = Vec::new();
    let report = |seq, problems: Vec<String>| EventReport { line: line_no, seq, ok: problems.is_empty(), problems };
    let event: Value = match serde_json::from_str(line) {
        Ok(v @ Value::Object(_)) => v,
        _ => return report(None, vec!["not a JSON object".into()]),
    };
    let seq = event["seq"].as_u64();
    for k in FIELDS {
        if event.get(k).is_none() {
            problems.push(format!("missing field {k}"));
        }
    }
    if !problems.is_empty() {
        return report(seq, problems);
    }
    let Some(seq) = seq.filter(|s| *s >= 1) else {
        return report(None, vec!["seq is not a positive integer".into()]);
    };

    match canonical::encode(&event["payload"]) {
        Ok(bytes) => {
            let h: Hash = Sha256::digest(bytes.as_bytes()).into();
            if event["payload_hash"].as_str().and_then(hex32) != Some(h) {
                problems.push(format!("payload_hash does not match payload (recomputed {})", short(&h)));
            }
        }
        Err(e) => problems.push(format!("payload not encodable: {e}")),
    }
    let leaf = match event_leaf(&event) {
        Ok(l) => l,
        Err(e) => {
            problems.push(format!("event not encodable: {e}"));
            return report(Some(seq), problems);
        }
    };
    let claimed = event["event_hash"].as_str().and_then(hex32);
    if claimed != Some(leaf) {
        let c = claimed.map_or("invalid".to_string(), |c| short(&c));
        problems.push(format!("event_hash mismatch ({c} → {})", short(&leaf)));
    }

    match (proof, root) {
        (None, _) => problems.push("no inclusion proof".into()),
        (Some(_), None) => problems.push("checkpoint has no root".into()),
        (Some(p), Some(root)) => {
            let path: Option<Vec<Hash>> = p.path.iter().map(|h| hex32(h)).collect();
            if p.leaf_index != seq - 1 {
                problems.push(format!("proof is for leaf {}, event is leaf {}", p.leaf_index, seq - 1));
            } else if p.tree_size != size {
                problems.push(format!("proof is for size {}, checkpoint is size {size}", p.tree_size));
            } else if !path.is_some_and(|path| merkle::verify_inclusion(root, size, seq - 1, &leaf, &path)) {
                problems.push("inclusion proof does not verify against the checkpoint root".into());
            }
        }
    }
    report(Some(seq), problems)
}

fn check_consistency(pkg: &Package, current: &Note, key: &TrustedKey) -> Option<Check> {
    let (prior, proof) = match (&pkg.prior_checkpoint, &pkg.consistency) {
        (None, None) => return None,
        (Some(p), Some(c)) => (p, c),
        _ => return Some(Check::fail("prior_checkpoint and consistency.json must come together")),
    };
    let prior = match parse_note(prior) {
        Ok(n) => n,
        Err(e) => return Some(Check::fail(format!("prior checkpoint: {e}"))),
    };
    if !prior.signed_by(key) {
        return Some(Check::fail("prior checkpoint signature does not verify"));
    }
    if prior.origin != current.origin {
        return Some(Check::fail("prior checkpoint is from a different log"));
    }
    if (proof.old_size, proof.new_size) != (prior.tree_size, current.tree_size) {
        return Some(Check::fail(format!(
            "proof covers {}→{}, checkpoints are {}→{}",
            proof.old_size, proof.new_size, prior.tree_size, current.tree_size
        )));
    }
    let path: Option<Vec<Hash>> = proof.path.iter().map(|h| hex32(h)).collect();
    let ok = path.is_some_and(|p| {
        merkle::verify_consistency(&prior.root, prior.tree_size, &current.root, current.tree_size, &p)
    });
    Some(if ok {
        Check::pass(format!("size {} is a prefix of size {}", prior.tree_size, current.tree_size))
    } else {
        Check::fail(format!("size {} is NOT a prefix of size {}", prior.tree_size, current.tree_size))
    })
}

pub fn verify_package(pkg: &Package, key: &TrustedKey) -> VerificationReport {
    let mut structure = Vec::new();
    let (note, checkpoint) = match parse_note(&pkg.checkpoint) {
        Ok(n) => {
            let c = if n.signed_by(key) {
                Check::pass(format!("{} size {} signed by {}", n.origin, n.tree_size, key.name))
            } else {
                Check::fail("signature does not verify with the trusted key")
            };
            (Some(n), c)
        }
        Err(e) => (None, Check::fail(e)),
    };
    let size = note.as_ref().map_or(0, |n| n.tree_size);
    let root = note.as_ref().and_then(|n| n.tree_root());

    let lines: Vec<&str> = pkg.events_jsonl.lines().collect();
    if lines.is_empty() {
        structure.push("no events".into());
    }
    if lines.len() != pkg.proofs.len() {
        structure.push(format!("{} events but {} proofs", lines.len(), pkg.proofs.len()));
    }
    let events: Vec<EventReport> = lines
        .iter()
        .enumerate()
        .map(|(i, line)| check_event(i + 1, line, pkg.proofs.get(i), root.as_ref(), size))
        .collect();
    let seqs: Vec<u64> = events.iter().filter_map(|e| e.seq).collect();
    if seqs.windows(2).any(|w| w[0] >= w[1]) {
        structure.push("events are not in increasing seq order".into());
    }
    if seqs.iter().any(|s| *s > size) {
        structure.push(format!("an event lies beyond checkpoint size {size}"));
    }
    let consistency = note.as_ref().and_then(|n| check_consistency(pkg, n, key));
    let ok = checkpoint.ok
        && structure.is_empty()
        && events.iter().all(|e| e.ok)
        && consistency.as_ref().is_none_or(|c| c.ok);
    VerificationReport {
        tree_size: note.map(|n| n.tree_size),
        events,
        checkpoint,
        consistency,
        structure,
        ok,
    }
}
