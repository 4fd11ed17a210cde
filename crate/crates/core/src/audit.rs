//! Audit package export.
//!
//! A package is a directory:
//!
//! ```text
//! events.jsonl       one canonical-JSON event per line, seq order
//! proofs.json        inclusion proofs, one per event, at the checkpoint size
//! checkpoint         signed note for that size
//! prior_checkpoint   optional earlier note
//! consistency.json   optional proof linking prior_checkpoint to checkpoint
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{KernelError, Result};
use crate::kernel::Kernel;
use crate::store::EventFilter;
use crate::tlog::{ConsistencyProof, InclusionProof};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const PROOFS_FILE: &str = "proofs.json";
pub const CHECKPOINT_FILE: &str = "checkpoint";
pub const PRIOR_CHECKPOINT_FILE: &str = "prior_checkpoint";
pub const CONSISTENCY_FILE: &str = "consistency.json";

/// In-memory form of a package; also the JSON body served over HTTP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditPackage {
    pub events_jsonl: String,
    pub proofs: Vec<InclusionProof>,
    pub checkpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency: Option<ConsistencyProof>,
}

impl AuditPackage {
    pub fn event_count(&self) -> usize {
        self.events_jsonl.lines().count()
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(EVENTS_FILE), &self.events_jsonl)?;
        std::fs::write(dir.join(PROOFS_FILE), to_json(&self.proofs))?;
        std::fs::write(dir.join(CHECKPOINT_FILE), &self.checkpoint)?;
        for stale in [PRIOR_CHECKPOINT_FILE, CONSISTENCY_FILE] {
            let p = dir.join(stale);
            if p.exists() {
                std::fs::remove_file(p)?;
            }
        }
        if let (Some(prior), Some(proof)) = (&self.prior_checkpoint, &self.consistency) {
            std::fs::write(dir.join(PRIOR_CHECKPOINT_FILE), prior)?;
            std::fs::write(dir.join(CONSISTENCY_FILE), to_json(proof))?;
        }
        Ok(())
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("proofs serialize");
    s.push('\n');
    s
}

/// Builds a package for the events selected by `filter`, proven against a
/// freshly published checkpoint of the whole log. The most recent earlier
/// checkpoint, if any, is linked by a consistency proof.
pub fn export_package(kernel: &mut Kernel, filter: &EventFilter) -> Result<AuditPackage> {
    let prior = kernel.store().db().latest_checkpoint(u64::MAX)?;
    let checkpoint = kernel.publish_checkpoint()?;
    let size = checkpoint.tree_size;
    let events = kernel.read_events(&EventFilter {
        to_seq: Some(filter.to_seq.unwrap_or(size).min(size)),
        ..filter.clone()
    })?;
    if events.is_empty() {
        return Err(KernelError::NotFound("no events in the requested range".into()));
    }
    let mut events_jsonl = String::new();
    let mut proofs = Vec::with_capacity(events.len());
    for e in &events {
        events_jsonl.push_str(std::str::from_utf8(&e.to_canonical_json()?).expect("canonical JSON is UTF-8"));
        events_jsonl.push('\n');
        proofs.push(kernel.prove_inclusion(e.seq, Some(size))?);
    }
    let (prior_checkpoint, consistency) = match prior {
        Some((old, note)) if old > 0 && old < size => (Some(note), Some(kernel.prove_consistency(old, Some(size))?)),
        _ => (None, None),
    };
    Ok(AuditPackage {
        events_jsonl,
        proofs,
        checkpoint: checkpoint.format(),
        prior_checkpoint,
        consistency,
    })
}

/// `export_package` written to `dir`.
pub fn export_to_dir(kernel: &mut Kernel, filter: &EventFilter, dir: &Path) -> Result<AuditPackage> {
    let pkg = export_package(kernel, filter)?;
    pkg.write_dir(dir)?;
    Ok(pkg)
}
