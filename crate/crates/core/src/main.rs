use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use adiaframe::cli::{parse_config, run};
use adiaframe::tolerance::{Tolerances, PROFILE_ENV};
use adiaframe::Error;

/// Run an adiabatic-frame scenario from a JSON configuration.
#[derive(Debug, Parser)]
#[command(name = "adiaframe", version)]
struct Args {
    /// Scenario configuration (JSON).
    #[arg(long)]
    config: PathBuf,

    /// Output directory for CSV series and the JSON report.
    #[arg(long, default_value = "adiaframe-out")]
    out: PathBuf,

    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,

    /// Reject unknown configuration keys instead of warning.
    #[arg(long)]
    strict: bool,

    /// Only report errors.
    #[arg(long)]
    quiet: bool,
}

fn execute(args: &Args) -> Result<bool, Error> {
    let text = fs::read_to_string(&args.config)?;
    // Validation during parsing already reads the tolerance profile, so the
    // config's own profile has to be installed first. A malformed value is
    // left for `parse_config` to report.
    let from_config = serde_json::from_str::<serde_json::Value>(&text)
        .ok()
        .and_then(|v| v.get("tolerances").cloned())
        .and_then(|t| serde_json::from_value::<Tolerances>(t).ok());
    let tolerances = match (from_config, std::env::var(PROFILE_ENV)) {
        (Some(t), _) => t,
        (None, Ok(name)) => Tolerances::named(&name)?,
        (None, Err(_)) => Tolerances::default(),
    };
    tolerances.install()?;

    let parsed = parse_config(&text, args.strict)?;
    for key in &parsed.unknown_keys {
        log::warn!("ignoring unknown configuration key {key}");
    }
    let mut config = parsed.config;
    if args.seed.is_some() {
        config.seed = args.seed;
        config.validate()?;
    }

    let report = run(&config, Some(&args.out))?;
    if !args.quiet {
        for check in &report.checks {
            println!(
                "{} {} (measured {:e}, limit {:e})",
                if check.passed { "pass" } else { "FAIL" },
                check.name,
                check.measured,
                check.limit
            );
        }
        println!("report written to {}", args.out.join("report.json").display());
    }
    Ok(report.passed)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = if args.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let record = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{record}");
            ExitCode::from(2)
        }
    }
}
