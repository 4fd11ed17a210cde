use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sovereign_verify::{parse_key, verify_package, Package};

/// Verify an exported audit package against a trusted checkpoint key.
#[derive(Parser)]
#[command(name = "sovereign-verify", version)]
struct Args {
    /// Package directory, or a JSON bundle file.
    package: PathBuf,
    /// Verifier key text (name+hint+base64) or a file containing it.
    #[arg(long)]
    key: String,
    /// Print the full report as JSON.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let key_text = match std::fs::read_to_string(&args.key) {
        Ok(t) => t,
        Err(_) => args.key.clone(),
    };
    let key = match parse_key(&key_text) {
        Ok(k) => k,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let pkg = match Package::load(&args.package) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let report = verify_package(&pkg, &key);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).unwrap());
    } else {
        println!("{report}");
    }
    if report.ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
