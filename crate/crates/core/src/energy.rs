//! Energy accounting: production, share allocation, cost quotes and the
//! reserve/settle state machine.
//!
//! All quantities are whole `u64` units. Rates are held in parts per million
//! so `⌈rate · r⌉` is computed exactly.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{KernelError, Result};
use crate::model::{ActionType, ActorId};

pub const PPM: u64 = 1_000_000;

/// Per-action base costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostTable {
    pub observe: u64,
    pub create: u64,
    pub mutate: u64,
    pub execute_base: u64,
    pub execute_bytes_divisor: u64,
}

impl Default for CostTable {
    fn default() -> Self {
        CostTable {
            observe: 0,
            create: 10,
            mutate: 15,
            execute_base: 25,
            execute_bytes_divisor: 256,
        }
    }
}

impl CostTable {
    /// Rejects tables that break `observe ≤ create ≤ mutate ≤ execute`.
    pub fn validate(&self) -> Result<()> {
        if self.execute_bytes_divisor == 0 {
            return Err(KernelError::Config("costs.execute_bytes_divisor must be positive".into()));
        }
        if !(self.observe <= self.create && self.create <= self.mutate && self.mutate <= self.execute_base) {
            return Err(KernelError::Config(format!(
                "costs must satisfy observe <= create <= mutate <= execute_base, got {} {} {} {}",
                self.observe, self.create, self.mutate, self.execute_base
            )));
        }
        Ok(())
    }

    pub fn base(&self, t: ActionType) -> u64 {
        match t {
            ActionType::Observe => self.observe,
            ActionType::Create => self.create,
            ActionType::Mutate => self.mutate,
            ActionType::Execute => self.execute_base,
        }
    }

    pub fn max_base(&self) -> u64 {
        ActionType::ALL.iter().map(|&t| self.base(t)).max().unwrap_or(0)
    }

    /// Cost of an action. Execute adds `⌊output_bytes / divisor⌋` when the
    /// payload reports `output_bytes`.
    pub fn quote(&self, t: ActionType, payload: &Value) -> Result<u64> {
        let base = self.base(t);
        if t != ActionType::Execute {
            return Ok(base);
        }
        let bytes = match payload.get("output_bytes") {
            None | Some(Value::Null) => 0,
            Some(v) => v
                .as_u64()
                .ok_or_else(|| KernelError::payload("output_bytes", "must be a non-negative integer"))?,
        };
        Ok(base.saturating_add(bytes / self.execute_bytes_divisor))
    }
}

/// Hardware capacity: `lambda` units per second, one tick per interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Capacity {
    pub lambda: u64,
    pub tick_interval_ms: u64,
}

impl Default for Capacity {
    fn default() -> Self {
        Capacity {
            lambda: 1000,
            tick_interval_ms: 1000,
        }
    }
}

impl Capacity {
    /// `λ · Δt`, floored to whole units.
    pub fn produce_per_tick(&self) -> u64 {
        (self.lambda as u128 * self.tick_interval_ms as u128 / 1000).min(u64::MAX as u128) as u64
    }

    pub fn tick_interval_ns(&self) -> u64 {
        self.tick_interval_ms.saturating_mul(1_000_000)
    }

    /// Production must cover the most expensive base action in one tick.
    pub fn check_sufficiency(&self, costs: &CostTable) -> Result<()> {
        if self.lambda == 0 || self.tick_interval_ms == 0 {
            return Err(KernelError::Config("capacity.lambda and capacity.tick_interval_ms must be positive".into()));
        }
        let produced = self.produce_per_tick();
        if produced < costs.max_base() {
            return Err(KernelError::Config(format!(
                "production per tick ({produced}) is below the largest base cost ({})",
                costs.max_base()
            )));
        }
        Ok(())
    }
}

/// Commitment rate in parts per million.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rate {
    ppm: u64,
}

impl Rate {
    pub fn from_ppm(ppm: u64) -> Result<Rate> {
        if ppm > PPM {
            return Err(KernelError::Config(format!("rate {ppm} ppm exceeds 1")));
        }
        Ok(Rate { ppm })
    }

    /// Converts a decimal rate such as `0.2`, rounding to the nearest ppm.
    pub fn from_decimal(rate: f64) -> Result<Rate> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(KernelError::Config(format!("rate {rate} outside [0, 1]")));
        }
        Rate::from_ppm((rate * PPM as f64).round() as u64)
    }

    pub fn ppm(&self) -> u64 {
        self.ppm
    }

    pub fn as_decimal(&self) -> f64 {
        self.ppm as f64 / PPM as f64
    }

    /// `⌈rate · reserved⌉`.
    pub fn commitment(&self, reserved: u64) -> u64 {
        let num = reserved as u128 * self.ppm as u128;
        num.div_ceil(PPM as u128) as u64
    }
}

impl Default for Rate {
    fn default() -> Self {
        Rate { ppm: 200_000 }
    }
}

/// Splits `produced` over `(actor, share)` pairs with floor division.
/// Remainders are not minted.
pub fn allocate(produced: u64, shares: &[(ActorId, u64)]) -> Vec<(ActorId, u64)> {
    let total: u128 = shares.iter().map(|(_, s)| *s as u128).sum();
    if total == 0 {
        return Vec::new();
    }
    shares
        .iter()
        .map(|(id, s)| (id.clone(), (*s as u128 * produced as u128 / total) as u64))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Balance {
    pub available: u64,
    pub reserved: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReservationState {
    Held,
    Settled,
    Released,
}

/// An amount locked against a balance or envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reservation {
    pub amount: u64,
    pub state: ReservationState,
}

/// How a terminal reservation was split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Settlement {
    pub consumed: u64,
    pub returned: u64,
}

impl Reservation {
    pub fn held(amount: u64) -> Self {
        Reservation {
            amount,
            state: ReservationState::Held,
        }
    }

    pub fn settle(&mut self, actual: u64) -> Result<Settlement> {
        self.ensure_held()?;
        if actual > self.amount {
            return Err(KernelError::State(format!(
                "cannot settle {actual} against a reservation of {}",
                self.amount
            )));
        }
        self.state = ReservationState::Settled;
        Ok(Settlement {
            consumed: actual,
            returned: self.amount - actual,
        })
    }

    /// Consumes the commitment slice and releases the rest.
    pub fn settle_commitment(&mut self, rate: Rate) -> Result<Settlement> {
        self.ensure_held()?;
        let consumed = rate.commitment(self.amount);
        self.state = ReservationState::Released;
        Ok(Settlement {
            consumed,
            returned: self.amount - consumed,
        })
    }

    /// Returns the full amount without consuming anything.
    pub fn release(&mut self) -> Result<Settlement> {
        self.ensure_held()?;
        self.state = ReservationState::Released;
        Ok(Settlement {
            consumed: 0,
            returned: self.amount,
        })
    }

    fn ensure_held(&self) -> Result<()> {
        if self.state != ReservationState::Held {
            return Err(KernelError::State(format!("reservation already {:?}", self.state).to_lowercase()));
        }
        Ok(())
    }
}
