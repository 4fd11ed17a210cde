use std::fmt;
use std::time::Instant;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Expectation {
    pub what: String,
    pub expected: String,
    pub observed: String,
    pub ok: bool,
}

/// Outcome of one adversarial scenario. Passes iff every expectation holds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub invariant: String,
    pub title: String,
    pub steps: u32,
    pub expectations: Vec<Expectation>,
    pub pass: bool,
    pub elapsed_ms: f64,
}

impl ScenarioResult {
    pub fn failures(&self) -> impl Iterator<Item = &Expectation> {
        self.expectations.iter().filter(|e| !e.ok)
    }
}

impl fmt::Display for ScenarioResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<5} {} ({} steps, {}/{} checks, {:.1} ms)",
            if self.pass { "PASS" } else { "FAIL" },
            self.invariant,
            self.title,
            self.steps,
            self.expectations.iter().filter(|e| e.ok).count(),
            self.expectations.len(),
            self.elapsed_ms
        )?;
        for e in self.failures() {
            write!(f, "\n      {}: expected {}, observed {}", e.what, e.expected, e.observed)?;
        }
        Ok(())
    }
}

/// Collects expectations while a scenario runs.
pub struct Scenario {
    invariant: String,
    title: String,
    steps: u32,
    expectations: Vec<Expectation>,
    start: Instant,
}

impl Scenario {
    pub fn new(invariant: &str, title: &str) -> Scenario {
        Scenario {
            invariant: invariant.into(),
            title: title.into(),
            steps: 0,
            expectations: Vec::new(),
            start: Instant::now(),
        }
    }

    pub fn step(&mut self) {
        self.steps += 1;
    }

    pub fn steps(&mut self, n: u32) {
        self.steps += n;
    }

    pub fn expect<T: fmt::Debug + PartialEq>(&mut self, what: &str, expected: T, observed: T) -> bool {
        let ok = expected == observed;
        self.expectations.push(Expectation {
            what: what.into(),
            expected: format!("{expected:?}"),
            observed: format!("{observed:?}"),
            ok,
        });
        ok
    }

    pub fn check(&mut self, what: &str, ok: bool, observed: impl fmt::Display) -> bool {
        self.expectations.push(Expectation {
            what: what.into(),
            expected: "true".into(),
            observed: observed.to_string(),
            ok,
        });
        ok
    }

    /// Runs `body`; an error becomes a failed expectation rather than a
    /// panic.
    pub fn run<E: fmt::Display>(mut self, body: impl FnOnce(&mut Scenario) -> Result<(), E>) -> ScenarioResult {
        if let Err(e) = body(&mut self) {
            self.expectations.push(Expectation {
                what: "scenario ran to completion".into(),
                expected: "no error".into(),
                observed: e.to_string(),
                ok: false,
            });
        }
        let pass = !self.expectations.is_empty() && self.expectations.iter().all(|e| e.ok);
        ScenarioResult {
            invariant: self.invariant,
            title: self.title,
            steps: self.steps,
            expectations: self.expectations,
            pass,
            elapsed_ms: self.start.elapsed().as_secs_f64() * 1e3,
        }
    }
}
