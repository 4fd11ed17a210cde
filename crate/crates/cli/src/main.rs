use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sovereign_cli::api::{self, ActionRequest, ApiError, EventQuery};
use sovereign_cli::creds::Credentials;
use sovereign_core::audit::export_package;
use sovereign_core::config::KernelConfig;
use sovereign_core::envelope::{EnvelopeSpec, HoldDecision, HoldRule};
use sovereign_core::kernel::KernelOptions;
use sovereign_core::model::{ActionType, ActorId, ActorKind, ActorSpec};
use sovereign_core::boundary::WritableEntry;
use sovereign_core::store::Durability;
use sovereign_core::Kernel;
use sovereign_harness::bench::{self, BenchOptions};

const VERIFIER_KEY_FILE: &str = "keys/verifier.pub";

/// Capability kernel with a verifiable append-only log.
#[derive(Parser)]
#[command(name = "sovereign", version)]
struct Cli {
    /// Kernel data directory.
    #[arg(long, global = true, env = "SOVEREIGN_DATA_DIR", default_value = "sovereign-data")]
    data_dir: PathBuf,
    /// Actor on whose behalf the command runs.
    #[arg(long = "as", global = true, default_value = "root")]
    as_actor: ActorId,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Create a data directory, signing key and root token.
    Init {
        /// Kernel configuration (TOML); defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint origin line.
        #[arg(long)]
        origin: Option<String>,
    },
    /// Kernel summary.
    Status,
    #[command(subcommand)]
    Actor(ActorCmd),
    #[command(subcommand)]
    Envelope(EnvelopeCmd),
    /// Submit an action.
    Submit {
        #[arg(value_name = "TYPE")]
        action_type: ActionType,
        target: String,
        /// JSON payload file, or '-' for stdin.
        #[arg(long, conflicts_with = "json")]
        payload: Option<PathBuf>,
        /// Inline JSON payload.
        #[arg(long)]
        json: Option<String>,
        #[arg(long)]
        envelope: Option<String>,
    },
    #[command(subcommand)]
    Hold(HoldCmd),
    /// Credit one production tick if the interval has elapsed.
    Tick,
    /// List events.
    Events(EventArgs),
    /// Publish and print a signed checkpoint.
    Checkpoint,
    #[command(subcommand)]
    Proof(ProofCmd),
    /// Write an audit package.
    Export {
        /// Output directory, or a file with --bundle.
        out: PathBuf,
        /// Write a single JSON bundle instead of a directory.
        #[arg(long)]
        bundle: bool,
        #[command(flatten)]
        filter: EventArgs,
    },
    /// Verify an audit package.
    Verify {
        package: PathBuf,
        /// Verifier key text or file; defaults to this data directory's key.
        #[arg(long)]
        key: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7420")]
        addr: SocketAddr,
        /// Do not schedule production ticks and hold timeouts.
        #[arg(long)]
        no_ticks: bool,
    },
    /// Run the adversarial invariant scenarios.
    Invariants {
        #[arg(long)]
        json: bool,
    },
    /// Randomized property run against an independent oracle.
    Fuzz {
        #[arg(long, default_value_t = 1000)]
        actions: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Subcommand)]
enum ActorCmd {
    /// Register an actor and issue it an HTTP token.
    Create {
        id: ActorId,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        purpose: Option<String>,
        /// Writable entry `pattern:action`; repeatable.
        #[arg(long = "writable")]
        writable: Vec<WritableEntry>,
        #[arg(long, default_value_t = 1)]
        share: u64,
        /// Expiry as a Unix timestamp in seconds.
        #[arg(long)]
        expiry: Option<u64>,
    },
    List,
    /// Issue another HTTP token for an existing actor.
    Token { id: ActorId },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Human,
    Agent,
}

#[derive(Subcommand)]
enum EnvelopeCmd {
    /// Issue an envelope from the acting actor's balance.
    Issue {
        #[arg(long)]
        holder: ActorId,
        #[arg(long)]
        budget: u64,
        /// Target pattern; repeatable.
        #[arg(long = "target", required = true)]
        targets: Vec<String>,
        /// Authorized action type; repeatable.
        #[arg(long = "action", required = true)]
        actions: Vec<ActionType>,
        /// Seconds until expiry.
        #[arg(long)]
        duration: Option<u64>,
        /// Hold rule `pattern:action`; repeatable.
        #[arg(long = "hold-on")]
        hold_on: Vec<HoldRule>,
        #[arg(long)]
        hold_timeout: Option<u64>,
        /// Parent envelope for delegation.
        #[arg(long)]
        parent: Option<String>,
    },
    List,
}

#[derive(Subcommand)]
enum HoldCmd {
    /// Pending holds.
    List,
    Approve { id: String },
    Reject { id: String },
    /// Time out overdue holds now.
    Sweep,
}

#[derive(Subcommand)]
enum ProofCmd {
    Inclusion {
        seq: u64,
        #[arg(long)]
        size: Option<u64>,
    },
    Consistency {
        old: u64,
        #[arg(long)]
        new: Option<u64>,
    },
}

#[derive(Args, Clone)]
struct EventArgs {
    #[arg(long)]
    from: Option<u64>,
    #[arg(long)]
    to: Option<u64>,
    #[arg(long)]
    actor: Option<String>,
    /// Target prefix.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    limit: Option<u64>,
}

impl EventArgs {
    fn query(&self) -> EventQuery {
        EventQuery {
            from: self.from,
            to: self.to,
            actor: self.actor.clone(),
            target: self.target.clone(),
            limit: self.limit,
            ..EventQuery::default()
        }
    }
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Per-type pipeline latency.
    Latency(BenchArgs),
    /// Sustained submissions per second.
    Throughput(BenchArgs),
    /// Inclusion proof size and generation time by log size.
    Proofs {
        #[arg(long, value_delimiter = ',', default_values_t = bench::TABLE_SIZES)]
        sizes: Vec<u64>,
        #[command(flatten)]
        args: BenchArgs,
    },
    /// Hold request, approve and reject latency.
    Hold {
        #[arg(long, default_value_t = bench::HOLD_SAMPLES)]
        samples: usize,
        #[command(flatten)]
        args: BenchArgs,
    },
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = bench::ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value_t = bench::WARMUP)]
    warmup: usize,
    /// Throughput window in seconds.
    #[arg(long, default_value_t = 5.0)]
    window: f64,
    /// Skip fsync on commit.
    #[arg(long)]
    no_sync: bool,
    #[arg(long)]
    json: bool,
}

impl BenchArgs {
    fn options(&self) -> BenchOptions {
        BenchOptions {
            iterations: self.iterations,
            warmup: self.warmup,
            window: Duration::from_secs_f64(self.window),
            durability: if self.no_sync { Durability::Normal } else { Durability::Full },
        }
    }
}

enum Failure {
    Usage(String),
    Api(ApiError),
    /// Already reported; exit 1.
    Quiet,
}

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Failure {
        Failure::Api(e)
    }
}

impl From<sovereign_core::KernelError> for Failure {
    fn from(e: sovereign_core::KernelError) -> Failure {
        Failure::Api(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::Api(ApiError::internal(e.to_string()))
    }
}

type Outcome = Result<(), Failure>;

fn print<T: Serialize>(v: &T) {
    use std::io::Write;
    // A closed pipe (`| head`) is not an error worth a panic.
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(v).expect("serializable output"));
}

fn open(dir: &Path) -> Result<Kernel, Failure> {
    Ok(Kernel::open(dir, KernelOptions::default())?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Api(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Quiet) => ExitCode::from(1),
    }
}

fn run(cli: Cli) -> Outcome {
    let dir = cli.data_dir.as_path();
    let me = cli.as_actor.clone();
    match cli.cmd {
        Cmd::Init { config, origin } => init(dir, config, origin),
        Cmd::Status => print_ok(api::status(&open(dir)?)?),
        Cmd::Actor(c) => actor(dir, &me, c),
        Cmd::Envelope(c) => envelope(dir, &me, c),
        Cmd::Submit { action_type, target, payload, json, envelope } => {
            let payload = read_payload(payload.as_deref(), json.as_deref())?;
            let req = ActionRequest { action_type, target, payload, envelope };
            let (_, v) = api::submit(&mut open(dir)?, &me, req)?;
            print_ok(v)
        }
        Cmd::Hold(c) => hold(dir, &me, c),
        Cmd::Tick => print_ok(json!(open(dir)?.tick()?)),
        Cmd::Events(q) => print_ok(api::events(&open(dir)?, &q.query())?),
        Cmd::Checkpoint => {
            print!("{}", open(dir)?.publish_checkpoint()?.format());
            Ok(())
        }
        Cmd::Proof(ProofCmd::Inclusion { seq, size }) => print_ok(json!(open(dir)?.prove_inclusion(seq, size)?)),
        Cmd::Proof(ProofCmd::Consistency { old, new }) => print_ok(json!(open(dir)?.prove_consistency(old, new)?)),
        Cmd::Export { out, bundle, filter } => {
            let pkg = export_package(&mut open(dir)?, &filter.query().filter())?;
            if bundle {
                std::fs::write(&out, serde_json::to_string_pretty(&pkg).expect("package serializes"))?;
            } else {
                pkg.write_dir(&out)?;
            }
            eprintln!("wrote {} events to {}", pkg.event_count(), out.display());
            Ok(())
        }
        Cmd::Verify { package, key, json } => verify(dir, &package, key, json),
        Cmd::Serve { addr, no_ticks } => {
            let kernel = open(dir)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(sovereign_cli::server::serve(kernel, addr, !no_ticks))?;
            Ok(())
        }
        Cmd::Invariants { json } => {
            let results = sovereign_harness::invariants::run_invariants();
            if json {
                print(&results);
            } else {
                for r in &results {
                    println!("{r}");
                }
            }
            if results.iter().all(|r| r.pass) { Ok(()) } else { Err(Failure::Quiet) }
        }
        Cmd::Fuzz { actions, seed, json } => {
            let report = sovereign_harness::fuzz::run_fuzz(actions, seed)?;
            if json {
                print(&report);
            } else {
                println!(
                    "{} {} actions, seed {}: {} events, {} boundary checks, {} prefix checks, {} root checks, {:.0} ms",
                    if report.pass() { "PASS" } else { "FAIL" },
                    report.actions,
                    report.seed,
                    report.events,
                    report.boundary_checks,
                    report.prefix_checks,
                    report.root_checks,
                    report.elapsed_ms
                );
                for (k, n) in &report.outcomes {
                    println!("  {k:<22} {n}");
                }
                for v in &report.violations {
                    println!("  violation: {v}");
                }
            }
            if report.pass() { Ok(()) } else { Err(Failure::Quiet) }
        }
        Cmd::Bench(c) => bench_cmd(c),
    }
}

fn print_ok(v: Value) -> Outcome {
    print(&v);
    Ok(())
}

fn read_payload(file: Option<&Path>, inline: Option<&str>) -> Result<Value, Failure> {
    let text = match (file, inline) {
        (Some(p), _) if p == Path::new("-") => std::io::read_to_string(std::io::stdin())?,
        (Some(p), _) => std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        (None, Some(s)) => s.to_string(),
        (None, None) => return Ok(json!({})),
    };
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("payload is not JSON: {e}")))
}

fn init(dir: &Path, config: Option<PathBuf>, origin: Option<String>) -> Outcome {
    let mut cfg = match config {
        Some(p) => KernelConfig::load(&p)?,
        None => KernelConfig::default(),
    };
    if let Some(o) = origin {
        cfg.origin = o;
    }
    let kernel = Kernel::init(dir, cfg, KernelOptions::default())?;
    let key = kernel.verifier_key().to_string();
    std::fs::write(dir.join(VERIFIER_KEY_FILE), format!("{key}\n"))?;
    let mut creds = Credentials::load(dir)?;
    let token = creds.issue(&ActorId::root());
    creds.save(dir)?;
    print_ok(json!({
        "data_dir": dir,
        "verifier_key": key,
        "root_token": token,
    }))
}

fn actor(dir: &Path, me: &ActorId, c: ActorCmd) -> Outcome {
    match c {
        ActorCmd::Create { id, kind, purpose, writable, share, expiry } => {
            let spec = ActorSpec {
                id,
                kind: match kind {
                    Kind::Human => ActorKind::Human,
                    Kind::Agent => ActorKind::Agent,
                },
                purpose,
                expiry,
                share,
                writable,
            };
            let actor = open(dir)?.register_actor(spec, me)?;
            let mut creds = Credentials::load(dir)?;
            let token = creds.issue(&actor.id);
            creds.save(dir)?;
            print_ok(json!({ "actor": actor, "token": token }))
        }
        ActorCmd::List => {
            let k = open(dir)?;
            let list: Vec<Value> = k
                .actors()
                .map(|a| json!({ "actor": a, "balance": k.balance(&a.id) }))
                .collect();
            print_ok(json!(list))
        }
        ActorCmd::Token { id } => {
            open(dir)?.actor(&id)?;
            let mut creds = Credentials::load(dir)?;
            let token = creds.issue(&id);
            creds.save(dir)?;
            print_ok(json!({ "actor": id, "token": token }))
        }
    }
}

fn envelope(dir: &Path, me: &ActorId, c: EnvelopeCmd) -> Outcome {
    match c {
        EnvelopeCmd::Issue { holder, budget, targets, actions, duration, hold_on, hold_timeout, parent } => {
            let targets: Vec<&str> = targets.iter().map(String::as_str).collect();
            let mut spec = EnvelopeSpec::new(&holder, budget, &targets, &actions)?;
            for rule in hold_on {
                spec = spec.hold_on(rule);
            }
            if let Some(s) = duration {
                spec = spec.duration(s);
            }
            if let Some(s) = hold_timeout {
                spec = spec.hold_timeout(s);
            }
            if let Some(p) = &parent {
                spec = spec.child_of(p);
            }
            print_ok(json!(open(dir)?.issue_envelope(me, spec)?))
        }
        EnvelopeCmd::List => {
            let k = open(dir)?;
            let now = k.now();
            let list: Vec<Value> = k
                .envelopes()
                .map(|e| json!({ "envelope": e, "state": e.state_at(now), "remaining": e.remaining() }))
                .collect();
            print_ok(json!(list))
        }
    }
}

fn hold(dir: &Path, me: &ActorId, c: HoldCmd) -> Outcome {
    let decision = match c {
        HoldCmd::List => return print_ok(json!(open(dir)?.pending_holds())),
        HoldCmd::Sweep => return print_ok(json!({ "expired": open(dir)?.expire_holds()? })),
        HoldCmd::Approve { id } => (id, HoldDecision::Approve),
        HoldCmd::Reject { id } => (id, HoldDecision::Reject),
    };
    let (_, v) = api::decide(&mut open(dir)?, me, &decision.0, decision.1)?;
    print_ok(v)
}

fn verify(dir: &Path, package: &Path, key: Option<String>, json: bool) -> Outcome {
    let key_text = match key {
        Some(k) => std::fs::read_to_string(&k).unwrap_or(k),
        None => std::fs::read_to_string(dir.join(VERIFIER_KEY_FILE))
            .map_err(|e| Failure::Usage(format!("no --key and no {VERIFIER_KEY_FILE} in the data directory: {e}")))?,
    };
    let key = sovereign_verify::parse_key(&key_text).map_err(Failure::Usage)?;
    let pkg = sovereign_verify::Package::load(package).map_err(|e| Failure::Usage(e.to_string()))?;
    let report = sovereign_verify::verify_package(&pkg, &key);
    if json {
        print(&report);
    } else {
        println!("{report}");
    }
    if report.ok { Ok(()) } else { Err(Failure::Quiet) }
}

fn bench_cmd(c: BenchCmd) -> Outcome {
    match c {
        BenchCmd::Latency(a) => {
            let rows = bench::bench_latency(&a.options())?;
            if a.json {
                print(&rows);
            } else {
                println!("{:<10} {:>8} {:>12} {:>12} {:>12}", "action", "n", "median µs", "p95 µs", "max µs");
                for r in rows {
                    println!("{:<10} {:>8} {:>12.1} {:>12.1} {:>12.1}", r.action, r.stats.n, r.stats.median_us, r.stats.p95_us, r.stats.max_us);
                }
            }
        }
        BenchCmd::Throughput(a) => {
            let rows = bench::bench_throughput(&a.options(), &bench::THROUGHPUT_SCENARIOS)?;
            if a.json {
                print(&rows);
            } else {
                println!("{:<10} {:>10} {:>12}", "scenario", "total", "per second");
                for r in rows {
                    println!("{:<10} {:>10} {:>12.1}", r.scenario, r.total, r.per_sec);
                }
            }
        }
        BenchCmd::Proofs { sizes, args } => {
            let rows = bench::bench_proof_scaling(&sizes, args.iterations, args.warmup)?;
            if args.json {
                print(&rows);
            } else {
                println!("{:>8} {:>10} {:>10} {:>11} {:>14}", "size", "max hashes", "max bytes", "mean hashes", "median gen µs");
                for r in rows {
                    println!("{:>8} {:>10} {:>10} {:>11.2} {:>14.1}", r.size, r.max_hashes, r.max_bytes, r.mean_hashes, r.generation.median_us);
                }
            }
        }
        BenchCmd::Hold { samples, args: a } => {
            let rows = bench::bench_hold(samples, a.options().durability)?;
            if a.json {
                print(&rows);
            } else {
                println!("{:<14} {:>6} {:>12} {:>12}", "phase", "n", "median µs", "p95 µs");
                for r in rows {
                    println!("{:<14} {:>6} {:>12.1} {:>12.1}", r.phase, r.stats.n, r.stats.median_us, r.stats.p95_us);
                }
            }
        }
    }
    Ok(())
}
