//! `hypofk`: configuration-driven front end for the solvers and checks.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::RunConfig;
use error::{CliError, Status};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(
    name = "hypofk",
    version,
    about = "Feynman-Kac Monte Carlo for degenerate diffusions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank of the bracket basis at the configured points.
    CheckHormander(Common),
    /// Parabolic, harmonic, survival or density estimates.
    Solve(Common),
    /// Strong or weak PDE residuals and martingale drift tests.
    Verify(Common),
    /// Simulate the marked-point SLE diffusion.
    SleSim(Common),
    /// BPZ residual of a covariant pair.
    BpzCheck(Common),
    /// Closed forms for Brownian motion on (-1, 1).
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override `numerics.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override `numerics.threads`.
    #[arg(long)]
    threads: Option<usize>,
    /// Override `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Document<'a> {
    schema_version: u32,
    version: &'static str,
    command: &'a str,
    status: &'static str,
    config: &'a RunConfig,
    result: serde_json::Value,
    /// The only fields that change between identical runs.
    metadata: Metadata,
}

#[derive(Serialize)]
struct Metadata {
    timestamp_unix: u64,
    runtime_seconds: f64,
    threads: usize,
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Pass => "pass",
        Status::CheckFailed => "check_failed",
        Status::ConfigError => "config_error",
        Status::Unreliable => "unreliable",
    }
}

fn load(common: &Common, required: bool) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text)
                .map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message)))?
        }
        None if required => return Err(CliError::config("--config is required")),
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.numerics.seed = seed;
    }
    if let Some(t) = common.threads {
        cfg.numerics.threads = Some(t);
    }
    if let Some(out) = &common.out {
        cfg.output.dir = Some(out.clone());
    }
    cfg.resolve();
    Ok(cfg)
}

fn run(name: &str, common: &Common) -> Result<Status, CliError> {
    let start = Instant::now();
    let cfg = load(common, name != "oracle")?;
    if let Some(t) = cfg.numerics.threads {
        if t == 0 {
            return Err(CliError::config("numerics.threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    let out = match name {
        "check-hormander" => commands::check_hormander(&cfg)?,
        "solve" => commands::solve(&cfg)?,
        "verify" => commands::verify(&cfg)?,
        "sle-sim" => commands::sle_sim(&cfg)?,
        "bpz-check" => commands::bpz_check(&cfg)?,
        "oracle" => commands::oracle(&cfg, common.config.is_some())?,
        _ => unreachable!("clap rejects unknown commands"),
    };
    let doc = Document {
        schema_version: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION"),
        command: name,
        status: status_name(out.status),
        config: &cfg,
        result: out.result,
        metadata: Metadata {
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            runtime_seconds: start.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
        },
    };
    let json = serde_json::to_string_pretty(&doc).map_err(|e| CliError::config(e.to_string()))?;
    if let Some(dir) = &cfg.output.dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("result.json"), format!("{json}\n"))?;
        for (file, content) in &out.files {
            std::fs::write(dir.join(file), content)?;
        }
    }
    println!("{json}");
    Ok(out.status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::CheckHormander(c) => ("check-hormander", c),
        Command::Solve(c) => ("solve", c),
        Command::Verify(c) => ("verify", c),
        Command::SleSim(c) => ("sle-sim", c),
        Command::BpzCheck(c) => ("bpz-check", c),
        Command::Oracle(c) => ("oracle", c),
    };
    match run(name, common) {
        Ok(status) => status.into(),
        Err(e) => {
            eprintln!("error: {e}");
            e.status.into()
        }
    }
}
