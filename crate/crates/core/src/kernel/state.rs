use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::energy::Balance;
use crate::envelope::{Envelope, HoldRequest};
use crate::error::{KernelError, Result};
use crate::model::{Actor, ActorId};
use crate::store::{Db, Kind, Writer};

const META_KEY: &str = "kernel";

/// Kernel-wide counters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub ticks: u64,
    pub last_tick: Option<u64>,
    /// Total energy ever credited by production.
    pub minted: u64,
    /// Total energy ever settled.
    pub consumed: u64,
    pub last_timestamp: u64,
    pub published_size: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct BalanceRecord {
    actor: ActorId,
    #[serde(flatten)]
    balance: Balance,
}

/// Working copy of the mutable kernel state. Every mutable accessor marks
/// the record dirty; dirty records are written by `flush` inside the
/// enclosing transaction.
#[derive(Debug, Default)]
pub(crate) struct State {
    pub actors: BTreeMap<ActorId, Actor>,
    pub balances: BTreeMap<ActorId, Balance>,
    pub envelopes: BTreeMap<String, Envelope>,
    pub holds: BTreeMap<String, HoldRequest>,
    pub counters: Counters,
    dirty: BTreeSet<(Kind, String)>,
}

impl State {
    pub fn load(db: Db<'_>) -> Result<State> {
        let actors = db.records::<Actor>(Kind::Actor)?.into_iter().map(|a| (a.id.clone(), a)).collect();
        let balances = db
            .records::<BalanceRecord>(Kind::Balance)?
            .into_iter()
            .map(|r| (r.actor, r.balance))
            .collect();
        let envelopes = db
            .records::<Envelope>(Kind::Envelope)?
            .into_iter()
            .map(|e| (e.id.clone(), e))
            .collect();
        let holds = db
            .records::<HoldRequest>(Kind::Hold)?
            .into_iter()
            .map(|h| (h.id.clone(), h))
            .collect();
        let counters = db.record::<Counters>(Kind::Meta, META_KEY)?.unwrap_or_default();
        Ok(State {
            actors,
            balances,
            envelopes,
            holds,
            counters,
            dirty: BTreeSet::new(),
        })
    }

    pub fn flush(&mut self, w: &mut Writer<'_>) -> Result<()> {
        for (kind, key) in std::mem::take(&mut self.dirty) {
            match kind {
                Kind::Actor => w.put_record(kind, &key, &self.actors[key.as_str()])?,
                Kind::Balance => {
                    let actor = ActorId::new(key.clone()).map_err(KernelError::Format)?;
                    let balance = self.balances[&actor];
                    w.put_record(kind, &key, &BalanceRecord { actor, balance })?
                }
                Kind::Envelope => w.put_record(kind, &key, &self.envelopes[&key])?,
                Kind::Hold => w.put_record(kind, &key, &self.holds[&key])?,
                Kind::Meta => w.put_record(kind, &key, &self.counters)?,
            }
        }
        Ok(())
    }

    pub fn actor(&self, id: &ActorId) -> Result<&Actor> {
        self.actors
            .get(id)
            .ok_or_else(|| KernelError::NotFound(format!("actor {id}")))
    }

    pub fn insert_actor(&mut self, actor: Actor) {
        self.dirty.insert((Kind::Actor, actor.id.to_string()));
        self.dirty.insert((Kind::Balance, actor.id.to_string()));
        self.balances.insert(actor.id.clone(), Balance::default());
        self.actors.insert(actor.id.clone(), actor);
    }

    pub fn balance(&self, id: &ActorId) -> Balance {
        self.balances.get(id).copied().unwrap_or_default()
    }

    pub fn balance_mut(&mut self, id: &ActorId) -> &mut Balance {
        self.dirty.insert((Kind::Balance, id.to_string()));
        self.balances.entry(id.clone()).or_default()
    }

    pub fn envelope(&self, id: &str) -> Result<&Envelope> {
        self.envelopes
            .get(id)
            .ok_or_else(|| KernelError::NotFound(format!("envelope {id}")))
    }

    pub fn envelope_mut(&mut self, id: &str) -> Result<&mut Envelope> {
        let env = self
            .envelopes
            .get_mut(id)
            .ok_or_else(|| KernelError::NotFound(format!("envelope {id}")))?;
        self.dirty.insert((Kind::Envelope, id.to_string()));
        Ok(env)
    }

    pub fn insert_envelope(&mut self, env: Envelope) {
        self.dirty.insert((Kind::Envelope, env.id.clone()));
        self.envelopes.insert(env.id.clone(), env);
    }

    pub fn hold(&self, id: &str) -> Result<&HoldRequest> {
        self.holds
            .get(id)
            .ok_or_else(|| KernelError::NotFound(format!("hold {id}")))
    }

    pub fn hold_mut(&mut self, id: &str) -> Result<&mut HoldRequest> {
        let hold = self
            .holds
            .get_mut(id)
            .ok_or_else(|| KernelError::NotFound(format!("hold {id}")))?;
        self.dirty.insert((Kind::Hold, id.to_string()));
        Ok(hold)
    }

    pub fn insert_hold(&mut self, hold: HoldRequest) {
        self.dirty.insert((Kind::Hold, hold.id.clone()));
        self.holds.insert(hold.id.clone(), hold);
    }

    pub fn counters_mut(&mut self) -> &mut Counters {
        self.dirty.insert((Kind::Meta, META_KEY.to_string()));
        &mut self.counters
    }
}
