//! Acceptance run: one PASS/FAIL line per primary criterion. Exits nonzero
//! if any criterion fails.

use std::time::{Duration, Instant};

use serde_json::Value;
use sovereign_core::tlog::{self, Digest, MemTree};
use sovereign_harness::bench::{self, BenchOptions, TABLE_SIZES};
use sovereign_harness::{determinism, fuzz, invariants, oracle};
use sovereign_verify::merkle;

struct Line {
    pass: bool,
    name: &'static str,
    detail: String,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

fn invariant_suite() -> Line {
    let (results, secs) = timed(invariants::run_invariants);
    for r in &results {
        println!("      {r}");
    }
    let passed = results.iter().filter(|r| r.pass).count();
    Line {
        pass: passed == 5,
        name: "invariant suite",
        detail: format!("{passed}/5 scenarios pass, exact expectations, {secs:.2} s (expected < 5 s)"),
    }
}

fn merkle_scaling() -> Line {
    let expected: [(usize, usize); 6] = [(4, 128), (6, 192), (7, 224), (9, 288), (10, 320), (14, 448)];
    let (rows, secs) = timed(|| bench::bench_proof_scaling(&TABLE_SIZES, 20, 2));
    let rows = match rows {
        Ok(r) => r,
        Err(e) => return Line { pass: false, name: "merkle proof scaling", detail: e.to_string() },
    };
    let observed: Vec<(usize, usize)> = rows.iter().map(|r| (r.max_hashes, r.max_bytes)).collect();
    let shown: Vec<String> = rows.iter().map(|r| format!("{}:{}h/{}B", r.size, r.max_hashes, r.max_bytes)).collect();
    Line {
        pass: observed == expected,
        name: "merkle proof scaling",
        detail: format!("max path {} (exact), {secs:.1} s incl. 10k appends (expected < 60 s)", shown.join(" ")),
    }
}

fn hexd(v: &Value) -> Digest {
    Digest::from_hex(v.as_str().unwrap()).unwrap()
}

fn rfc6962() -> Line {
    let v: Value = serde_json::from_str(include_str!("../../../testdata/rfc6962.json")).unwrap();
    let mut tree = MemTree::new();
    let mut leaves = Vec::new();
    for l in v["leaves"].as_array().unwrap() {
        let leaf = tlog::leaf_hash(&hex::decode(l.as_str().unwrap()).unwrap());
        leaves.push(leaf);
        tree.append(leaf).unwrap();
    }
    let mut checks = 0;
    let mut bad = Vec::new();
    let mut check = |ok: bool, what: String| {
        checks += 1;
        if !ok {
            bad.push(what);
        }
    };
    check(hexd(&v["empty_root"]) == Digest::sha256(b""), "empty root".into());
    let mut roots = vec![None];
    for r in v["roots"].as_array().unwrap() {
        let n = r["tree_size"].as_u64().unwrap();
        let got = tlog::root(&tree, n).unwrap();
        check(got == Some(hexd(&r["root"])), format!("root {n}"));
        roots.push(got);
    }
    for c in v["inclusion"].as_array().unwrap() {
        let (i, n) = (c["leaf_index"].as_u64().unwrap(), c["tree_size"].as_u64().unwrap());
        let want: Vec<Digest> = c["path"].as_array().unwrap().iter().map(hexd).collect();
        let proof = tlog::prove_inclusion(&tree, n, i).unwrap();
        let root = roots[n as usize].unwrap();
        check(proof.path == want, format!("inclusion path {i}@{n}"));
        check(tlog::verify_inclusion(&root, n, i, &leaves[i as usize], &proof), format!("kernel verifies {i}@{n}"));
        let raw: Vec<merkle::Hash> = want.iter().map(|d| *d.as_bytes()).collect();
        check(
            merkle::verify_inclusion(root.as_bytes(), n, i, leaves[i as usize].as_bytes(), &raw),
            format!("verifier verifies {i}@{n}"),
        );
    }
    for c in v["consistency"].as_array().unwrap() {
        let (m, n) = (c["old_size"].as_u64().unwrap(), c["new_size"].as_u64().unwrap());
        let want: Vec<Digest> = c["path"].as_array().unwrap().iter().map(hexd).collect();
        let proof = tlog::prove_consistency(&tree, m, n).unwrap();
        let (a, b) = (roots[m as usize].unwrap(), roots[n as usize].unwrap());
        check(proof.path == want, format!("consistency path {m}->{n}"));
        check(tlog::verify_consistency(&a, m, &b, n, &proof), format!("kernel verifies {m}->{n}"));
        let raw: Vec<merkle::Hash> = want.iter().map(|d| *d.as_bytes()).collect();
        check(merkle::verify_consistency(a.as_bytes(), m, b.as_bytes(), n, &raw), format!("verifier verifies {m}->{n}"));
    }
    Line {
        pass: bad.is_empty(),
        name: "rfc 6962 conformance",
        detail: if bad.is_empty() {
            format!("{checks}/{checks} reference checks (hashing, heads, inclusion, consistency), exact")
        } else {
            format!("{} of {checks} failed: {}", bad.len(), bad.join(", "))
        },
    }
}

fn energy() -> Line {
    let c = oracle::check_energy(10_000);
    Line {
        pass: c.mismatches.is_empty(),
        name: "energy arithmetic",
        detail: if c.mismatches.is_empty() {
            format!("{} cases vs brute-force oracle (commitment and quotes, r and bytes in 0..=10000), exact", c.cases)
        } else {
            c.mismatches.join("; ")
        },
    }
}

fn property_fuzz() -> Line {
    match timed(|| fuzz::run_fuzz(1000, 2026)) {
        (Ok(r), secs) => {
            for v in &r.violations {
                println!("      violation: {v}");
            }
            Line {
                pass: r.pass() && secs < 30.0,
                name: "property fuzz",
                detail: format!(
                    "{} actions, {} events, {} boundary oracle checks, {} prefix and {} root checks, {} violations, {secs:.1} s (limit 30 s)",
                    r.actions,
                    r.events,
                    r.boundary_checks,
                    r.prefix_checks,
                    r.root_checks,
                    r.violations.len()
                ),
            }
        }
        (Err(e), _) => Line { pass: false, name: "property fuzz", detail: e.to_string() },
    }
}

fn performance() -> Line {
    let opts = BenchOptions::default();
    let run = || -> sovereign_core::Result<(Vec<bench::LatencyRow>, Vec<bench::ThroughputRow>, Vec<bench::HoldRow>)> {
        Ok((
            bench::bench_latency(&opts)?,
            bench::bench_throughput(&BenchOptions { window: Duration::from_secs(5), ..opts }, &["mixed"])?,
            bench::bench_hold(bench::HOLD_SAMPLES, opts.durability)?,
        ))
    };
    let (lat, thr, hold) = match run() {
        Ok(x) => x,
        Err(e) => return Line { pass: false, name: "performance sanity", detail: e.to_string() },
    };
    let worst = lat.iter().map(|r| r.stats.median_us).fold(0.0, f64::max);
    let medians: Vec<String> = lat.iter().map(|r| format!("{} {:.0}", r.action, r.stats.median_us)).collect();
    let mixed = thr[0].per_sec;
    let phase = |p: &str| hold.iter().find(|h| h.phase == p).unwrap().stats.median_us;
    let (approve, reject) = (phase("approve"), phase("reject"));
    Line {
        pass: worst < 10_000.0 && mixed > 100.0 && approve > reject,
        name: "performance sanity",
        detail: format!(
            "median us [{}] (< 10000), mixed {mixed:.0}/s (> 100), approve {approve:.0} us > reject {reject:.0} us; reference 665-1274 us, 412/s",
            medians.join(", ")
        ),
    }
}

fn determinism() -> Line {
    let a = determinism::scripted_session(42);
    let b = determinism::scripted_session(42);
    let c = determinism::scripted_session(43);
    match (a, b, c) {
        (Ok(a), Ok(b), Ok(c)) => {
            let same = a.events_jsonl == b.events_jsonl && a.root == b.root && a.checkpoint == b.checkpoint;
            Line {
                pass: same && c.events_jsonl != a.events_jsonl,
                name: "determinism",
                detail: format!(
                    "{} events, events.jsonl byte-identical: {}, roots identical: {} ({}…), other id seed differs: {}",
                    a.events_jsonl.lines().count(),
                    a.events_jsonl == b.events_jsonl,
                    a.root == b.root,
                    &a.root[..12.min(a.root.len())],
                    c.events_jsonl != a.events_jsonl
                ),
            }
        }
        (a, b, c) => Line {
            pass: false,
            name: "determinism",
            detail: format!("session failed: {:?} {:?} {:?}", a.err(), b.err(), c.err()),
        },
    }
}

fn main() {
    let criteria: [fn() -> Line; 7] = [invariant_suite, merkle_scaling, rfc6962, energy, property_fuzz, performance, determinism];
    let mut failed = 0;
    println!("acceptance criteria");
    for c in criteria {
        let line = c();
        println!("{} {}: {}", if line.pass { "PASS" } else { "FAIL" }, line.name, line.detail);
        failed += usize::from(!line.pass);
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
