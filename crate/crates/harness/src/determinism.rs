//! Two runs of the same scripted session must produce the same bytes.

use serde_json::json;
use sovereign_core::audit;
use sovereign_core::model::{ActionType, SubmitOutcome};
use sovereign_core::store::EventFilter;
use sovereign_core::{KernelError, Result};

use crate::lab::{exec_payload, Lab};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionOutput {
    pub events_jsonl: String,
    pub root: String,
    pub checkpoint: String,
}

/// Registration, envelopes, commits, a rejection, both hold decisions, an
/// execute and ticks, all with an injected clock and id generator.
pub fn scripted_session(id_seed: u64) -> Result<SessionOutput> {
    let mut lab = Lab::standard(id_seed);
    let env = lab.bot_envelope(300, false)?;
    let held = lab.bot_envelope(200, true)?;
    for i in 0..4 {
        lab.submit("bot1", ActionType::Mutate, &format!("workspace/docs/{i}.md"), json!({ "rev": i }), Some(&env))?;
        lab.clock.advance_secs(1);
    }
    lab.submit("bot1", ActionType::Mutate, "workspace/code/x.rs", json!({}), Some(&env))?;
    lab.submit("bot1", ActionType::Execute, "workspace/docs/run", exec_payload(700), Some(&env))?;
    let mut holds = Vec::new();
    for name in ["p", "q"] {
        match lab.submit("bot1", ActionType::Mutate, &format!("workspace/docs/{name}.md"), json!({}), Some(&held))? {
            SubmitOutcome::HoldTriggered { hold_id } => holds.push(hold_id),
            other => return Err(KernelError::State(format!("expected a hold, got {other:?}"))),
        }
    }
    lab.decide("alice", &holds[0], "approve")?;
    lab.decide("alice", &holds[1], "reject")?;
    lab.tick()?;
    lab.observe("end", 3)?;
    let pkg = audit::export_package(&mut lab.k, &EventFilter::default())?;
    Ok(SessionOutput {
        events_jsonl: pkg.events_jsonl,
        root: lab.k.root()?.map(|d| d.to_hex()).unwrap_or_else(|| "null".into()),
        checkpoint: pkg.checkpoint,
    })
}
