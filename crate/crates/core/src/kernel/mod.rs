//! The sole committer: owns the store, the working state, the clock and the
//! signing key. Every mutation runs inside one store transaction.

mod admin;
mod holds;
mod pipeline;
mod state;

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

pub use pipeline::{parse_oid, validate_payload};
pub use state::Counters;
use state::State;

use crate::canonical::normalize;
use crate::clock::{Clock, IdGenerator, RandomIds, SystemClock};
use crate::config::KernelConfig;
use crate::energy::{Balance, Rate};
use crate::envelope::{Envelope, EnvelopeSpec, HoldDecision, HoldRequest};
use crate::error::{KernelError, Result};
use crate::model::{Action, ActionType, Actor, ActorId, ActorKind, ActorSpec, ActorStatus, Event, SubmitOutcome};
use crate::boundary::WritableEntry;
use crate::store::{Durability, EventFilter, Reader, Store, Writer};
use crate::tlog::{self, Checkpoint, CheckpointSigner, ConsistencyProof, Digest, InclusionProof, VerifierKey};

pub const CONFIG_FILE: &str = "config.toml";
pub const KEY_DIR: &str = "keys";
pub const KEY_FILE: &str = "checkpoint.seed";
pub const CHECKPOINT_FILE: &str = "checkpoint";

/// Injection points. Defaults: system clock, random v4 ids, full fsync.
pub struct KernelOptions {
    pub clock: Box<dyn Clock>,
    pub ids: Box<dyn IdGenerator>,
    pub durability: Durability,
    /// Fixed checkpoint key seed for `init`; random when absent.
    pub signing_seed: Option<[u8; 32]>,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            clock: Box::new(SystemClock),
            ids: Box::new(RandomIds),
            durability: Durability::Full,
            signing_seed: None,
        }
    }
}

impl KernelOptions {
    pub fn clock(mut self, clock: impl Clock + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn ids(mut self, ids: impl IdGenerator + 'static) -> Self {
        self.ids = Box::new(ids);
        self
    }

    pub fn durability(mut self, d: Durability) -> Self {
        self.durability = d;
        self
    }

    pub fn signing_seed(mut self, seed: [u8; 32]) -> Self {
        self.signing_seed = Some(seed);
        self
    }
}

/// Energy bookkeeping totals. `minted == accounted()` at all times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Conservation {
    pub minted: u64,
    pub actor_balances: u64,
    pub envelope_holdings: u64,
    pub consumed: u64,
}

impl Conservation {
    pub fn accounted(&self) -> u64 {
        self.actor_balances + self.envelope_holdings + self.consumed
    }

    pub fn holds(&self) -> bool {
        self.minted == self.accounted()
    }
}

pub struct Kernel {
    store: Store,
    state: State,
    config: KernelConfig,
    rate: Rate,
    clock: Box<dyn Clock>,
    ids: Box<dyn IdGenerator>,
    signer: CheckpointSigner,
}

impl Kernel {
    /// Creates a fresh data directory: database, config copy, signing key
    /// and the implicit root actor. The log starts empty.
    pub fn init(dir: &Path, config: KernelConfig, opts: KernelOptions) -> Result<Kernel> {
        config.validate()?;
        if Store::exists(dir) {
            return Err(KernelError::State(format!("{} is already initialized", dir.display())));
        }
        std::fs::create_dir_all(dir.join(KEY_DIR))?;
        std::fs::write(dir.join(CONFIG_FILE), config.to_toml())?;
        let signer = match opts.signing_seed {
            Some(seed) => CheckpointSigner::new(config.origin.clone(), seed),
            None => CheckpointSigner::generate(config.origin.clone()),
        };
        write_secret(&dir.join(KEY_DIR).join(KEY_FILE), &hex::encode(signer.seed()))?;

        let store = Store::open(dir, opts.durability)?;
        let mut kernel = Kernel {
            store,
            state: State::default(),
            rate: config.commitment_rate()?,
            config,
            clock: opts.clock,
            ids: opts.ids,
            signer,
        };
        kernel.transact(|tx| {
            let now = tx.now;
            tx.st.insert_actor(Actor {
                id: ActorId::root(),
                kind: ActorKind::Human,
                creator: None,
                purpose: None,
                expiry: None,
                share: 1,
                status: ActorStatus::Active,
                writable: vec![WritableEntry::full()],
                created_at: now,
            });
            tx.st.counters_mut();
            Ok(())
        })?;
        Ok(kernel)
    }

    pub fn open(dir: &Path, opts: KernelOptions) -> Result<Kernel> {
        if !Store::exists(dir) {
            return Err(KernelError::NotFound(format!("no kernel data in {}", dir.display())));
        }
        let config = KernelConfig::load(&dir.join(CONFIG_FILE))?;
        let seed_hex = std::fs::read_to_string(dir.join(KEY_DIR).join(KEY_FILE))
            .map_err(|e| KernelError::Key(format!("reading signing key: {e}")))?;
        let seed: [u8; 32] = hex::decode(seed_hex.trim())
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| KernelError::Key("signing key file is not 32 hex bytes".into()))?;
        let signer = CheckpointSigner::new(config.origin.clone(), seed);
        let store = Store::open(dir, opts.durability)?;
        let state = State::load(store.db())?;
        if !state.actors.contains_key(&ActorId::root()) {
            return Err(KernelError::Consistency("root actor missing".into()));
        }
        Ok(Kernel {
            store,
            state,
            rate: config.commitment_rate()?,
            config,
            clock: opts.clock,
            ids: opts.ids,
            signer,
        })
    }

    /// Opens `dir`, initializing it with `config` first if empty.
    pub fn open_or_init(dir: &Path, config: KernelConfig, opts: KernelOptions) -> Result<Kernel> {
        if Store::exists(dir) {
            Kernel::open(dir, opts)
        } else {
            Kernel::init(dir, config, opts)
        }
    }

    fn reload(&mut self) -> Result<()> {
        self.state = State::load(self.store.db())?;
        Ok(())
    }

    /// Runs `f` in one store transaction. On error nothing is committed and
    /// the working state is reloaded from disk.
    fn transact<T>(&mut self, f: impl FnOnce(&mut Tx<'_>) -> Result<T>) -> Result<T> {
        let now = self.clock.now();
        let result = {
            let w = self.store.begin()?;
            let mut tx = Tx {
                w,
                st: &mut self.state,
                cfg: &self.config,
                rate: self.rate,
                ids: &mut *self.ids,
                now,
            };
            f(&mut tx).and_then(|v| {
                tx.st.flush(&mut tx.w)?;
                tx.w.commit()?;
                Ok(v)
            })
        };
        if result.is_err() {
            self.reload()?;
        }
        result
    }

    // Mutations -------------------------------------------------------------

    pub fn register_actor(&mut self, spec: ActorSpec, requester: &ActorId) -> Result<Actor> {
        self.transact(|tx| tx.register_actor(spec, requester))
    }

    pub fn issue_envelope(&mut self, issuer: &ActorId, spec: EnvelopeSpec) -> Result<Envelope> {
        self.transact(|tx| tx.issue_envelope(issuer, spec))
    }

    /// The seven-step pipeline. Boundary rejections and energy shortfalls
    /// are outcomes; payload, state and storage failures are errors.
    pub fn submit_action(&mut self, action: Action) -> Result<SubmitOutcome> {
        if pipeline::is_hold_response(&action) {
            self.expire_holds()?;
        }
        self.transact(|tx| tx.submit(action, false))
    }

    /// Library-level hold decision. Approve replays the held action;
    /// reject settles the commitment and records a `hold_response`.
    pub fn respond_hold(&mut self, hold_id: &str, decision: HoldDecision, decider: &ActorId) -> Result<SubmitOutcome> {
        self.expire_holds()?;
        self.transact(|tx| tx.respond_hold(hold_id, decision, decider, false))
    }

    /// Times out every due hold. Returns their ids.
    pub fn expire_holds(&mut self) -> Result<Vec<String>> {
        let now = self.clock.now();
        let due = self.state.holds.values().any(|h| h.is_due(now));
        let finalizable = self
            .state
            .envelopes
            .values()
            .any(|e| !e.finalized && e.is_expired_at(now) && e.reserved == 0 && e.delegated == 0);
        if !due && !finalizable {
            return Ok(Vec::new());
        }
        self.transact(|tx| tx.sweep())
    }

    /// One production tick at the current clock time.
    pub fn tick(&mut self) -> Result<Event> {
        self.transact(|tx| {
            tx.sweep()?;
            tx.tick()
        })
    }

    /// Signs and records a checkpoint for the current tree size.
    pub fn publish_checkpoint(&mut self) -> Result<Checkpoint> {
        let size = self.tree_size()?;
        if let Some(prev) = self.state.counters.published_size {
            if prev > size {
                return Err(KernelError::Consistency(format!(
                    "log shrank below a published checkpoint ({prev} > {size})"
                )));
            }
        }
        let cp = self.checkpoint_at(size)?;
        let note = cp.format();
        self.transact(|tx| {
            tx.w.put_checkpoint(size, &note)?;
            tx.st.counters_mut().published_size = Some(size);
            Ok(())
        })?;
        std::fs::write(self.store.dir().join(CHECKPOINT_FILE), &note)?;
        Ok(cp)
    }

    /// A signed checkpoint for `size` (not recorded).
    pub fn checkpoint_at(&self, size: u64) -> Result<Checkpoint> {
        let root = self.store.db().root(size)?;
        Ok(self.signer.sign(&self.config.origin, size, root))
    }

    // Reads -----------------------------------------------------------------

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn data_dir(&self) -> PathBuf {
        self.store.dir().to_path_buf()
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn verifier_key(&self) -> VerifierKey {
        self.signer.verifier_key()
    }

    pub fn tree_size(&self) -> Result<u64> {
        self.store.db().event_count()
    }

    pub fn root(&self) -> Result<Option<Digest>> {
        self.store.db().root(self.tree_size()?)
    }

    /// Inclusion proof for event `seq` against the tree at `tree_size`
    /// (default: current size).
    pub fn prove_inclusion(&self, seq: u64, tree_size: Option<u64>) -> Result<InclusionProof> {
        let size = self.resolve_size(tree_size)?;
        if seq == 0 || seq > size {
            return Err(KernelError::NotFound(format!("event {seq} in a tree of size {size}")));
        }
        self.store.db().prove_inclusion(size, seq - 1)
    }

    pub fn prove_consistency(&self, old_size: u64, new_size: Option<u64>) -> Result<ConsistencyProof> {
        let size = self.resolve_size(new_size)?;
        if old_size == 0 || old_size > size {
            return Err(KernelError::NotFound(format!("old size {old_size} for a tree of size {size}")));
        }
        self.store.db().prove_consistency(old_size, size)
    }

    fn resolve_size(&self, size: Option<u64>) -> Result<u64> {
        let current = self.tree_size()?;
        match size {
            None => Ok(current),
            Some(s) if s <= current => Ok(s),
            Some(s) => Err(KernelError::NotFound(format!("tree size {s} (log has {current})"))),
        }
    }

    pub fn read_events(&self, filter: &EventFilter) -> Result<Vec<Event>> {
        self.store.db().read_events(filter)
    }

    pub fn event(&self, seq: u64) -> Result<Event> {
        self.store
            .db()
            .event(seq)?
            .ok_or_else(|| KernelError::NotFound(format!("event {seq}")))
    }

    pub fn published_checkpoints(&self) -> Result<Vec<(u64, String)>> {
        self.store.db().checkpoints()
    }

    pub fn actor(&self, id: &ActorId) -> Result<&Actor> {
        self.state.actor(id)
    }

    pub fn actors(&self) -> impl Iterator<Item = &Actor> {
        self.state.actors.values()
    }

    pub fn balance(&self, id: &ActorId) -> Balance {
        self.state.balance(id)
    }

    pub fn envelope(&self, id: &str) -> Result<&Envelope> {
        self.state.envelope(id)
    }

    pub fn envelopes(&self) -> impl Iterator<Item = &Envelope> {
        self.state.envelopes.values()
    }

    pub fn hold(&self, id: &str) -> Result<&HoldRequest> {
        self.state.hold(id)
    }

    pub fn holds(&self) -> impl Iterator<Item = &HoldRequest> {
        self.state.holds.values()
    }

    /// Holds still open for a decision. Overdue ones are left out: any
    /// decision would find them timed out, though the sweep that records it
    /// has not run yet.
    pub fn pending_holds(&self) -> Vec<HoldRequest> {
        let now = self.now();
        let mut v: Vec<HoldRequest> = self
            .state
            .holds
            .values()
            .filter(|h| h.is_pending() && !h.is_due(now))
            .cloned()
            .collect();
        v.sort_by_key(|h| h.request_event_seq);
        v
    }

    pub fn counters(&self) -> &Counters {
        &self.state.counters
    }

    pub fn conservation(&self) -> Conservation {
        Conservation {
            minted: self.state.counters.minted,
            actor_balances: self.state.balances.values().map(|b| b.available + b.reserved).sum(),
            envelope_holdings: self.state.envelopes.values().map(Envelope::held_energy).sum(),
            consumed: self.state.counters.consumed,
        }
    }

    /// A new read-only connection for concurrent readers.
    pub fn reader(&self) -> Result<Reader> {
        self.store.reader()
    }

    pub(crate) fn store(&self) -> &Store {
        &self.store
    }

    /// Raw store access for tamper simulations.
    #[cfg(feature = "tamper-hook")]
    pub fn store_mut(&mut self) -> &mut Store {
        &mut self.store
    }
}

fn write_secret(path: &Path, contents: &str) -> Result<()> {
    #[cfg(unix)]
    {
        use std::io::Write;
        use std::os::unix::fs::OpenOptionsExt;
        let mut f = std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .mode(0o600)
            .open(path)?;
        f.write_all(contents.as_bytes())?;
        Ok(())
    }
    #[cfg(not(unix))]
    {
        std::fs::write(path, contents)?;
        Ok(())
    }
}

/// Everything a step needs inside one transaction.
pub(crate) struct Tx<'a> {
    pub w: Writer<'a>,
    pub st: &'a mut State,
    pub cfg: &'a KernelConfig,
    pub rate: Rate,
    pub ids: &'a mut dyn IdGenerator,
    pub now: u64,
}

/// Fields of an event other than those the log assigns.
pub(crate) struct NewEvent<'a> {
    pub actor: &'a ActorId,
    pub action_type: ActionType,
    pub target: &'a str,
    pub payload: Value,
    pub artifact_hash: Option<Digest>,
    pub reserved: u64,
    pub settled: u64,
}

impl Tx<'_> {
    /// Step 6: hash the event, append it to the store and the tree.
    pub fn append(&mut self, e: NewEvent<'_>) -> Result<Event> {
        let payload = normalize(&e.payload)?;
        let timestamp = self.now.max(self.st.counters.last_timestamp).max(1);
        let mut event = Event {
            id: self.ids.next_uuid(),
            seq: self.w.size() + 1,
            actor: e.actor.clone(),
            action_type: e.action_type,
            target: e.target.to_string(),
            payload_hash: Event::compute_payload_hash(&payload)?,
            payload,
            timestamp,
            artifact_hash: e.artifact_hash,
            reserved_energy: e.reserved,
            settled_energy: e.settled,
            event_hash: Digest::ZERO,
        };
        event.event_hash = event.compute_hash()?;
        self.w.append_event(&event)?;
        self.st.counters_mut().last_timestamp = timestamp;
        Ok(event)
    }

    pub fn new_id(&mut self, prefix: &str) -> String {
        format!("{prefix}-{}", self.ids.next_uuid())
    }
}

/// Recomputes the root from every stored leaf and compares it to the tree.
pub fn recompute_root(kernel: &Kernel) -> Result<(Option<Digest>, Option<Digest>)> {
    let events = kernel.read_events(&EventFilter::default())?;
    let mut mem = tlog::MemTree::new();
    for e in &events {
        mem.append(e.compute_hash()?)?;
    }
    Ok((mem.root()?, kernel.root()?))
}
