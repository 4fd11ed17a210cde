//! Brute-force integer oracles for the energy arithmetic. Deliberately
//! naive: search and repeated subtraction instead of division.

use sovereign_core::config::KernelConfig;
use sovereign_core::energy::CostTable;
use sovereign_core::model::ActionType;

use crate::lab::exec_payload;

/// Smallest `c` with `c ≥ 0.2 · r`, i.e. `5c ≥ r`.
pub fn brute_commitment(reserved: u64) -> u64 {
    let mut c = 0;
    while 5 * c < reserved {
        c += 1;
    }
    c
}

/// Default quote: 0 / 10 / 15 / 25 + whole 256-byte blocks of output.
pub fn brute_quote(t: ActionType, output_bytes: u64) -> u64 {
    match t {
        ActionType::Observe => 0,
        ActionType::Create => 10,
        ActionType::Mutate => 15,
        ActionType::Execute => {
            let (mut left, mut blocks) = (output_bytes, 0);
            while left >= 256 {
                left -= 256;
                blocks += 1;
            }
            25 + blocks
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnergyCheck {
    pub cases: u64,
    pub mismatches: Vec<String>,
}

/// Compares the kernel's commitment and quote against the oracles for
/// every `r` and `output_bytes` in `0..=max`.
pub fn check_energy(max: u64) -> EnergyCheck {
    let rate = KernelConfig::default().commitment_rate().expect("default rate");
    let costs = CostTable::default();
    let mut out = EnergyCheck { cases: 0, mismatches: Vec::new() };
    let mut miss = |what: String| {
        if out.mismatches.len() < 20 {
            out.mismatches.push(what);
        }
    };
    for r in 0..=max {
        let (got, want) = (rate.commitment(r), brute_commitment(r));
        if got != want {
            miss(format!("commitment({r}) = {got}, oracle {want}"));
        }
        let execute = costs.quote(ActionType::Execute, &exec_payload(r)).expect("quote");
        if execute != brute_quote(ActionType::Execute, r) {
            miss(format!("quote(execute, {r} bytes) = {execute}"));
        }
        out.cases += 2;
    }
    for t in [ActionType::Observe, ActionType::Create, ActionType::Mutate] {
        let got = costs.quote(t, &serde_json::json!({})).expect("quote");
        if got != brute_quote(t, 0) {
            miss(format!("quote({}) = {got}", t.as_str()));
        }
        out.cases += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_spot_values() {
        assert_eq!(brute_commitment(15), 3);
        assert_eq!(brute_commitment(0), 0);
        assert_eq!(brute_commitment(1), 1);
        assert_eq!(brute_commitment(10), 2);
        assert_eq!(brute_quote(ActionType::Execute, 255), 25);
        assert_eq!(brute_quote(ActionType::Execute, 256), 26);
    }
}
