//! Single-machine kernel: an append-only Merkle event log behind capability
//! boundaries, an energy ledger and human approval holds.

pub mod audit;
pub mod boundary;
pub mod canonical;
pub mod clock;
pub mod committer;
pub mod config;
pub mod energy;
pub mod envelope;
pub mod error;
pub mod kernel;
pub mod model;
pub mod store;
pub mod tlog;

pub use error::{KernelError, Result};
pub use kernel::{Kernel, KernelOptions};
