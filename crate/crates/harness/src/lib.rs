//! Adversarial invariant scenarios, a randomized property fuzz, brute-force
//! oracles and benchmarks, shared by the `sovereign` CLI and the acceptance
//! test target.

pub mod bench;
pub mod determinism;
pub mod fuzz;
pub mod invariants;
pub mod lab;
pub mod oracle;
pub mod scenario;

pub use scenario::{Expectation, ScenarioResult};
