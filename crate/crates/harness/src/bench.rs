//! Latency, throughput, proof-size and hold-workflow benchmarks. Timings
//! are wall clock and hardware-dependent; proof sizes are exact.

use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::json;
use sovereign_core::envelope::{EnvelopeSpec, HoldRule};
use sovereign_core::model::{ActionType, ActorSpec, SubmitOutcome};
use sovereign_core::store::Durability;
use sovereign_core::{KernelError, Result};

use crate::lab::{entries, id, payload_for, rich_config, Lab};

pub const ITERATIONS: usize = 200;
pub const WARMUP: usize = 20;
pub const HOLD_SAMPLES: usize = 8;
pub const TABLE_SIZES: [u64; 6] = [10, 50, 100, 500, 1000, 10_000];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stats {
    pub n: usize,
    pub median_us: f64,
    pub p95_us: f64,
    pub min_us: f64,
    pub max_us: f64,
}

impl Stats {
    /// Nearest-rank percentiles over the samples.
    pub fn from_samples(samples: &[Duration]) -> Stats {
        let mut us: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e6).collect();
        us.sort_by(|a, b| a.total_cmp(b));
        let n = us.len();
        let rank = |p: f64| us[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
        let median = if n % 2 == 1 { us[n / 2] } else { (us[n / 2 - 1] + us[n / 2]) / 2.0 };
        Stats { n, median_us: median, p95_us: rank(0.95), min_us: us[0], max_us: us[n - 1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyRow {
    pub action: String,
    pub iterations: usize,
    pub warmup: usize,
    pub stats: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputRow {
    pub scenario: String,
    pub window_secs: f64,
    pub total: u64,
    pub per_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProofRow {
    pub size: u64,
    pub max_hashes: usize,
    pub max_bytes: usize,
    pub mean_hashes: f64,
    pub generation: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoldRow {
    pub phase: String,
    pub stats: Stats,
}

#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    pub iterations: usize,
    pub warmup: usize,
    pub window: Duration,
    pub durability: Durability,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            iterations: ITERATIONS,
            warmup: WARMUP,
            window: Duration::from_secs(5),
            durability: Durability::Full,
        }
    }
}

/// A kernel where "bench" is an agent allowed everything under workspace,
/// holding a practically unlimited envelope.
struct BenchLab {
    lab: Lab,
    env: String,
    n: u64,
}

impl BenchLab {
    fn new(durability: Durability) -> Result<BenchLab> {
        let mut lab = Lab::with(rich_config(), 11, durability);
        lab.k.register_actor(ActorSpec::human("alice", entries(&["**:*"])), &sovereign_core::model::ActorId::root())?;
        lab.k.register_actor(ActorSpec::agent("bench", "benchmark load", entries(&["workspace/**:*"])), &id("alice"))?;
        let spec = EnvelopeSpec::new(&id("bench"), 40_000_000, &["workspace/**"], &ActionType::ALL)?;
        let env = lab.envelope("alice", spec)?;
        Ok(BenchLab { lab, env, n: 0 })
    }

    fn submit(&mut self, t: ActionType) -> Result<()> {
        self.n += 1;
        let target = format!("workspace/bench/{}/{}", t.as_str(), self.n);
        let env = (t != ActionType::Observe).then_some(self.env.as_str());
        let env = env.map(str::to_string);
        match self.lab.submit("bench", t, &target, payload_for(t, self.n), env.as_deref())? {
            SubmitOutcome::Committed { .. } => Ok(()),
            other => Err(KernelError::State(format!("bench action did not commit: {other:?}"))),
        }
    }
}

const MIX: [ActionType; 4] = [ActionType::Observe, ActionType::Create, ActionType::Mutate, ActionType::Execute];

/// Per-type pipeline latency: `iterations` submissions on a fresh kernel,
/// the first `warmup` discarded.
pub fn bench_latency(opts: &BenchOptions) -> Result<Vec<LatencyRow>> {
    let mut rows = Vec::new();
    for t in MIX {
        let mut b = BenchLab::new(opts.durability)?;
        let mut samples = Vec::with_capacity(opts.iterations);
        for _ in 0..opts.iterations {
            let start = Instant::now();
            b.submit(t)?;
            samples.push(start.elapsed());
        }
        rows.push(LatencyRow {
            action: t.as_str().into(),
            iterations: opts.iterations,
            warmup: opts.warmup,
            stats: Stats::from_samples(&samples[opts.warmup.min(samples.len().saturating_sub(1))..]),
        });
    }
    Ok(rows)
}

fn run_window(b: &mut BenchLab, window: Duration, pick: impl Fn(u64) -> ActionType) -> Result<(u64, f64)> {
    let start = Instant::now();
    let mut total = 0;
    while start.elapsed() < window {
        b.submit(pick(total))?;
        total += 1;
    }
    Ok((total, start.elapsed().as_secs_f64()))
}

/// Sequential commits over a fixed window, per type and mixed round-robin.
pub fn bench_throughput(opts: &BenchOptions, scenarios: &[&str]) -> Result<Vec<ThroughputRow>> {
    let mut rows = Vec::new();
    for &name in scenarios {
        let mut b = BenchLab::new(opts.durability)?;
        let (total, secs) = match name {
            "mixed" => run_window(&mut b, opts.window, |i| MIX[(i % 4) as usize])?,
            other => {
                let t: ActionType = other
                    .parse()
                    .map_err(|_| KernelError::Config(format!("unknown throughput scenario {other}")))?;
                run_window(&mut b, opts.window, |_| t)?
            }
        };
        rows.push(ThroughputRow { scenario: name.into(), window_secs: secs, total, per_sec: total as f64 / secs });
    }
    Ok(rows)
}

pub const THROUGHPUT_SCENARIOS: [&str; 5] = ["observe", "create", "mutate", "execute", "mixed"];

/// Inclusion proof sizes over every leaf of logs of the given sizes, and
/// generation time for the first leaf (the longest path).
pub fn bench_proof_scaling(sizes: &[u64], iterations: usize, warmup: usize) -> Result<Vec<ProofRow>> {
    let mut rows = Vec::new();
    for &n in sizes {
        let mut lab = Lab::with(rich_config(), 12, Durability::Normal);
        lab.observe("scale", n as usize)?;
        let (mut max, mut total) = (0usize, 0usize);
        for seq in 1..=n {
            let len = lab.k.prove_inclusion(seq, None)?.path.len();
            max = max.max(len);
            total += len;
        }
        let mut samples = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            let start = Instant::now();
            let p = lab.k.prove_inclusion(1, None)?;
            samples.push(start.elapsed());
            std::hint::black_box(p);
        }
        rows.push(ProofRow {
            size: n,
            max_hashes: max,
            max_bytes: max * 32,
            mean_hashes: if n == 0 { 0.0 } else { total as f64 / n as f64 },
            generation: Stats::from_samples(&samples[warmup.min(samples.len().saturating_sub(1))..]),
        });
    }
    Ok(rows)
}

/// Hold workflow phases: trigger, read pending, approve (replay plus
/// decision record), reject (one settlement event).
pub fn bench_hold(samples: usize, durability: Durability) -> Result<Vec<HoldRow>> {
    let mut lab = Lab::with(rich_config(), 13, durability);
    lab.add_standard_actors()?;
    let mut phases: [Vec<Duration>; 4] = Default::default();
    for i in 0..samples {
        let spec = EnvelopeSpec::new(&id("bot1"), 100, &["workspace/docs/*"], &[ActionType::Mutate])?
            .hold_on(HoldRule::new("workspace/**", ActionType::Mutate)?);
        let env = lab.envelope("alice", spec)?;
        let trigger = |lab: &mut Lab, name: &str| -> Result<(String, Duration)> {
            let start = Instant::now();
            let out = lab.submit("bot1", ActionType::Mutate, &format!("workspace/docs/{name}{i}"), json!({}), Some(&env))?;
            let took = start.elapsed();
            match out {
                SubmitOutcome::HoldTriggered { hold_id } => Ok((hold_id, took)),
                other => Err(KernelError::State(format!("expected a hold, got {other:?}"))),
            }
        };
        let (a, t) = trigger(&mut lab, "a")?;
        phases[0].push(t);
        let (b, _) = trigger(&mut lab, "b")?;

        let start = Instant::now();
        let pending = lab.k.pending_holds();
        phases[1].push(start.elapsed());
        std::hint::black_box(pending);

        for (idx, hold, decision) in [(2, &a, "approve"), (3, &b, "reject")] {
            let start = Instant::now();
            let out = lab.decide("alice", hold, decision)?;
            phases[idx].push(start.elapsed());
            if !out.is_committed() {
                return Err(KernelError::State(format!("{decision} did not commit: {out:?}")));
            }
        }
    }
    Ok(["trigger", "read_pending", "approve", "reject"]
        .iter()
        .zip(phases.iter())
        .map(|(p, s)| HoldRow { phase: p.to_string(), stats: Stats::from_samples(s) })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_use_nearest_rank() {
        let s: Vec<Duration> = (1..=20).map(Duration::from_micros).collect();
        let st = Stats::from_samples(&s);
        assert_eq!((st.min_us, st.max_us, st.median_us, st.p95_us), (1.0, 20.0, 10.5, 19.0));
    }

    #[test]
    fn small_scaling_rows() {
        let rows = bench_proof_scaling(&[1, 10], 3, 1).unwrap();
        assert_eq!((rows[0].max_hashes, rows[0].max_bytes), (0, 0));
        assert_eq!((rows[1].max_hashes, rows[1].max_bytes), (4, 128));
        assert!((rows[1].mean_hashes - 3.6).abs() < 1e-12);
    }
}
