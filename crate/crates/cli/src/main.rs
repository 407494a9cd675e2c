//! `rotsync`: generate instances, run estimators, certify estimates and
//! sweep noise levels.
//!
//! Exit codes: 0 success, 1 usage/parse/io error, 2 solver hit `max_iter`,
//! 3 verification found a failing applicable check.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "rotsync", version, about = "Rotation synchronization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// No progress messages.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write `instance.obs` for the configured (n, d, sigma, seed).
    Gen,
    /// Run the configured estimator; writes `estimate.stack`, `trace.csv`
    /// and `summary.json`.
    Solve {
        #[arg(long)]
        obs: PathBuf,
    },
    /// Certify an estimate; writes `report.json`.
    Verify {
        #[arg(long)]
        obs: PathBuf,
        #[arg(long)]
        estimate: PathBuf,
    },
    /// Solve every (sigma, seed) pair; writes `sweep.csv`.
    Sweep {
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

pub struct Context {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Context {
    pub fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let config = ExperimentConfig::load(cli.config.as_deref())?;
    std::fs::create_dir_all(&cli.out)?;
    let ctx = Context { config, out: cli.out, quiet: cli.quiet };
    match cli.command {
        Command::Gen => commands::gen(&ctx),
        Command::Solve { obs } => commands::solve(&ctx, &obs),
        Command::Verify { obs, estimate } => commands::verify(&ctx, &obs, &estimate),
        Command::Sweep { jobs } => commands::sweep(&ctx, jobs),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
