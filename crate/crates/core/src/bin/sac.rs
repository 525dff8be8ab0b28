//! Command-line driver: `sac <command> [--config PATH] [--seed N] [--out DIR]
//! [--threads N] [--snapshot-stride N]`.
//!
//! Exit codes: 0 success, 1 failed study check or runtime error, 2 usage or
//! configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use sac_core::config::{parse_config, RunConfig};
use sac_core::run::{execute, Command, RunOptions};
use sac_core::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Simulate,
    Uniform,
    Cauchy,
    Dependence,
    Strong,
    Derivative,
    Oracles,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::Uniform => Command::Uniform,
            Cmd::Cauchy => Command::Cauchy,
            Cmd::Dependence => Command::Dependence,
            Cmd::Strong => Command::Strong,
            Cmd::Derivative => Command::Derivative,
            Cmd::Oracles => Command::Oracles,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sac", version, about = "Stochastic Allen-Cahn solver and estimate studies")]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `ensemble.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides `snapshot_stride`.
    #[arg(long)]
    snapshot_stride: Option<usize>,
    /// Replicate traced by `simulate`.
    #[arg(long, default_value_t = 0)]
    replicate: u64,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

fn is_config_error(e: &Error) -> bool {
    match e {
        Error::InvalidParameter { .. } | Error::ConfigParse(_) => true,
        Error::Context { source, .. } => is_config_error(source),
        _ => false,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(p) => parse_config(p),
        None => Ok(RunConfig::default()),
    };
    let mut cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = cli.seed {
        cfg.ensemble.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    if let Some(s) = cli.snapshot_stride {
        cfg.snapshot_stride = s;
    }
    if cli.print_config {
        println!("{}", cfg.to_json_string());
        return ExitCode::SUCCESS;
    }
    if cli.threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    let opts = RunOptions {
        threads: cli.threads,
        replicate: cli.replicate,
    };
    match execute(cli.command.into(), &cfg, &opts) {
        Ok(outcome) => {
            for rep in &outcome.reports {
                for c in &rep.checks {
                    let tag = if c.passed { "PASS" } else { "FAIL" };
                    println!("{tag} {}: {} (value {:.6e}, threshold {})", rep.study, c.name, c.value, c.threshold);
                }
            }
            println!("outputs in {}", cfg.output_dir.display());
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                for f in &outcome.manifest.failed_checks {
                    eprintln!("failed: {f}");
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
