//! Kernel configuration, loaded from TOML.
//!
//! ```toml
//! origin = "kernel.local/log"
//! log_rejections = false
//! max_payload_bytes = 1048576
//!
//! [capacity]
//! lambda = 1000
//! tick_interval_ms = 1000
//!
//! [costs]
//! observe = 0
//! create = 10
//! mutate = 15
//! execute_base = 25
//! execute_bytes_divisor = 256
//!
//! [hold]
//! commitment_rate = 0.2
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::{Capacity, CostTable, Rate};
use crate::error::{KernelError, Result};

pub const DEFAULT_ORIGIN: &str = "kernel.local/log";
pub const DEFAULT_MAX_PAYLOAD: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HoldConfig {
    pub commitment_rate: f64,
}

impl Default for HoldConfig {
    fn default() -> Self {
        HoldConfig { commitment_rate: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    /// Checkpoint origin line and signer name.
    pub origin: String,
    pub log_rejections: bool,
    pub max_payload_bytes: usize,
    pub capacity: Capacity,
    pub costs: CostTable,
    pub hold: HoldConfig,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            origin: DEFAULT_ORIGIN.to_string(),
            log_rejections: false,
            max_payload_bytes: DEFAULT_MAX_PAYLOAD,
            capacity: Capacity::default(),
            costs: CostTable::default(),
            hold: HoldConfig::default(),
        }
    }
}

impl KernelConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: KernelConfig = toml::from_str(text).map_err(|e| KernelError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Startup checks: cost monotonicity, production sufficiency, rate range.
    pub fn validate(&self) -> Result<()> {
        if self.origin.is_empty() || self.origin.contains(['\n', ' ']) {
            return Err(KernelError::Config("origin must be a non-empty single token".into()));
        }
        self.costs.validate()?;
        self.capacity.check_sufficiency(&self.costs)?;
        self.commitment_rate()?;
        Ok(())
    }

    pub fn commitment_rate(&self) -> Result<Rate> {
        Rate::from_decimal(self.hold.commitment_rate)
    }
}
