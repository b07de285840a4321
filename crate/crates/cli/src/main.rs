//! `dp-contract`: design, verify, audit and reproduce from the command line.
//!
//! Exit codes: 0 success, 1 i/o, 2 config error, 3 verification or audit
//! failure, 4 numerical failure.

mod audit;
mod config;
mod design;
mod error;
mod output;
mod reproduce;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use config::FileConfig;
use error::CliError;
use output::OutputDir;

const THREADS_ENV: &str = "DP_CONTRACT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dp-contract", version, about = "Laplace noise design and privacy audits for contracting systems")]
struct Cli {
    /// TOML config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed; overrides `seed` in the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Use the published constants instead of recomputed ones (reproduce only)
    #[arg(long, global = true)]
    paper_constants: bool,
    /// PSD tolerance for certificate checks; overrides `tol` in the config
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a noise schedule (schedule.csv, design.json)
    Design,
    /// Check a contraction certificate on a grid (verify.json)
    Verify,
    /// Compute the privacy loss of a pair against its budget (audit.csv, audit.json)
    Audit,
    /// Regenerate a case study (table.csv, trajectories, summary JSON)
    Reproduce {
        #[arg(value_enum)]
        which: reproduce::Which,
    },
}

/// Result of a command that got far enough to write outputs.
pub struct Outcome {
    resolved: Value,
    failure: Option<String>,
}

impl Outcome {
    pub fn passed(resolved: Value) -> Self {
        Self { resolved, failure: None }
    }

    pub fn failed(resolved: Value, reason: String) -> Self {
        Self {
            resolved,
            failure: Some(reason),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: String,
    seed: u64,
    tol: f64,
    paper_constants: bool,
    status: &'static str,
    config: &'a Value,
    outputs: &'a [String],
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("{THREADS_ENV}: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let cfg = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None if matches!(cli.command, Command::Reproduce { .. }) => FileConfig::default(),
        None => return Err(CliError::Config("this command needs --config".into())),
    };
    if cli.paper_constants && !matches!(cli.command, Command::Reproduce { .. }) {
        return Err(CliError::Config("--paper-constants applies to `reproduce` only".into()));
    }
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let tol = cli.tol.or(cfg.tol).unwrap_or(dp_contract::contraction::DEFAULT_PSD_TOL);
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(CliError::Config(format!("`tol` must be finite and >= 0, got {tol}")));
    }

    let mut out = OutputDir::create(&cli.out)?;
    let (name, outcome) = match &cli.command {
        Command::Design => ("design".to_string(), design::run(&cfg, &mut out)?),
        Command::Verify => ("verify".to_string(), verify::run(&cfg, tol, &mut out)?),
        Command::Audit => ("audit".to_string(), audit::run(&cfg, seed, &mut out)?),
        Command::Reproduce { which } => {
            let label = serde_json::to_value(which).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            (
                format!("reproduce {label}"),
                reproduce::run(*which, &cfg, seed, tol, cli.paper_constants, &mut out)?,
            )
        }
    };
    let outputs = out.written().to_vec();
    out.write_json(
        "manifest.json",
        &Manifest {
            tool: "dp-contract",
            version: env!("CARGO_PKG_VERSION"),
            command: name,
            seed,
            tol,
            paper_constants: cli.paper_constants,
            status: if outcome.failure.is_some() { "failed" } else { "passed" },
            config: &outcome.resolved,
            outputs: &outputs,
        },
    )?;
    match outcome.failure {
        Some(reason) => Err(CliError::Failed(reason)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dp-contract: {e}");
            e.exit_code()
        }
    }
}
