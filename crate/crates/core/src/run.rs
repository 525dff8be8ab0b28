//! Run orchestration: executes a study, writes its reports and a manifest.
//!
//! Output layout inside `output_dir`:
//! `<study>.csv`, `<study>.json` per report, `manifest.json`, and for
//! `simulate` also `trajectory.csv`, `final.bin` and `snapshots/step_NNNNNN.bin`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiments::{self, EstimateReport, ReportRow};
use crate::grid::{self, Grid};
use crate::potential::YosidaLevel;
use crate::stepper::{self, Problem, Reaction, SimulateOptions, TrajectoryState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Uniform,
    Cauchy,
    Dependence,
    Strong,
    Derivative,
    Oracles,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Simulate,
        Command::Uniform,
        Command::Cauchy,
        Command::Dependence,
        Command::Strong,
        Command::Derivative,
        Command::Oracles,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Uniform => "uniform",
            Command::Cauchy => "cauchy",
            Command::Dependence => "dependence",
            Command::Strong => "strong",
            Command::Derivative => "derivative",
            Command::Oracles => "oracles",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid("command", format!("unknown command `{s}`")))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    /// Replicate index traced by `simulate`.
    pub replicate: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub study: String,
    pub csv: PathBuf,
    pub json: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub study: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub threads: usize,
    pub outputs: Vec<OutputEntry>,
    pub timings: Vec<Timing>,
    pub passed: bool,
    pub failed_checks: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub reports: Vec<EstimateReport>,
    pub manifest: RunManifest,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.manifest.passed
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_report(dir: &Path, rep: &EstimateReport) -> Result<OutputEntry> {
    let csv = dir.join(format!("{}.csv", rep.study));
    let json = dir.join(format!("{}.json", rep.study));
    let file = File::create(&csv).map_err(|e| Error::io(&csv, e))?;
    rep.write_csv(BufWriter::new(file))?;
    write_json(&json, rep)?;
    Ok(OutputEntry {
        study: rep.study.clone(),
        csv,
        json,
    })
}

/// Executes `command` on `cfg`, writing all artifacts to `cfg.output_dir`.
/// Study failures are reported through [`RunOutcome::passed`], not as errors.
pub fn execute(command: Command, cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    if command == Command::Derivative {
        cfg.validate_for_derivative()?;
    }
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let config_hash = cfg.config_hash()?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    let threads = pool.current_num_threads();

    let mut timings = Vec::new();
    let mut reports = pool.install(|| -> Result<Vec<EstimateReport>> {
        let started = Instant::now();
        let reps = run_study(command, cfg, opts, &dir, &mut timings)?;
        timings.push(Timing {
            study: "total".into(),
            seconds: started.elapsed().as_secs_f64(),
        });
        Ok(reps)
    })
    .map_err(|e| e.context(format!("study {}", command.as_str())))?;

    let mut outputs = Vec::new();
    let mut failed_checks = Vec::new();
    for rep in reports.iter_mut() {
        rep.config_hash = config_hash.clone();
        outputs.push(write_report(&dir, rep)?);
        failed_checks.extend(rep.failed_checks().iter().map(|c| format!("{}: {}", rep.study, c.name)));
    }
    let manifest = RunManifest {
        command: command.as_str().into(),
        config_hash,
        seed: cfg.ensemble.seed,
        code_version: env!("CARGO_PKG_VERSION").into(),
        threads,
        outputs,
        timings,
        passed: failed_checks.is_empty(),
        failed_checks,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(RunOutcome { reports, manifest })
}

fn timed<T>(timings: &mut Vec<Timing>, study: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f()?;
    timings.push(Timing {
        study: study.into(),
        seconds: t.elapsed().as_secs_f64(),
    });
    Ok(out)
}

fn run_study(
    command: Command,
    cfg: &RunConfig,
    opts: &RunOptions,
    dir: &Path,
    timings: &mut Vec<Timing>,
) -> Result<Vec<EstimateReport>> {
    let ens = cfg.ensemble()?;
    Ok(match command {
        Command::Simulate => vec![timed(timings, "simulate", || simulate_one(cfg, opts.replicate, dir))?],
        Command::Uniform => vec![timed(timings, "uniform", || experiments::uniform_bounds_study(&ens))?],
        Command::Cauchy => vec![timed(timings, "cauchy", || experiments::cauchy_study(&ens))?],
        Command::Strong => vec![timed(timings, "strong", || experiments::strong_solution_study(&ens))?],
        Command::Dependence => vec![timed(timings, "dependence", || {
            experiments::dependence_study(&ens, &cfg.perturbations())
        })?],
        Command::Derivative => {
            let mut out = Vec::new();
            for n in cfg.gauge_orders()? {
                let name = format!("derivative_n{}", n.get());
                out.push(timed(timings, &name, || experiments::derivative_study(&ens, n))?);
            }
            out
        }
        Command::Oracles => vec![timed(timings, "oracles", || experiments::heat_and_ode_oracles(&ens).map(|r| r.0))?],
    })
}

fn write_snapshot_file(path: &Path, g: &Grid, state: &TrajectoryState) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    grid::write_snapshot(&mut w, g, &state.u)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// One trajectory at the smallest regularization level.
fn simulate_one(cfg: &RunConfig, replicate: u64, dir: &Path) -> Result<EstimateReport> {
    let g = cfg.grid()?;
    let lambda = *cfg.ensemble.lambda_levels.last().expect("validated non-empty");
    let level = YosidaLevel::new(lambda)?;
    let params = cfg.potential.params()?;
    let problem = Problem::new(
        g.clone(),
        Reaction::new(&params, Some(level))?,
        cfg.noise.clone(),
        cfg.forcing()?,
        cfg.stepper.clone(),
        cfg.ensemble.seed,
    )?;
    let u0 = cfg.initial.generate(&g, cfg.ensemble.seed, replicate)?;

    let snap_dir = dir.join("snapshots");
    if cfg.snapshot_stride > 0 {
        fs::create_dir_all(&snap_dir).map_err(|e| Error::io(&snap_dir, e))?;
    }
    let traj_path = dir.join("trajectory.csv");
    let traj_file = File::create(&traj_path).map_err(|e| Error::io(&traj_path, e))?;
    let mut traj = csv::Writer::from_writer(BufWriter::new(traj_file));
    traj.write_record(["step", "t", "h_norm_sq", "grad_norm_sq", "sup_norm", "energy"])?;
    let stride = cfg.snapshot_stride;
    let mut sink = |s: &TrajectoryState| -> Result<()> {
        let n = grid::norms(&g, &s.u)?;
        let e = grid::energy(&g, &params, Some(&level), &s.u)?;
        traj.write_record([
            s.step_index.to_string(),
            format!("{:e}", s.t),
            format!("{:e}", n.h_norm_sq),
            format!("{:e}", n.grad_norm_sq),
            format!("{:e}", n.sup_norm),
            format!("{e:e}"),
        ])?;
        if stride > 0 && s.step_index as usize % stride == 0 {
            write_snapshot_file(&snap_dir.join(format!("step_{:06}.bin", s.step_index)), &g, s)?;
        }
        Ok(())
    };
    let (state, stats) = stepper::simulate(
        u0,
        &problem,
        replicate,
        SimulateOptions {
            gauge_orders: Vec::new(),
            snapshots: Some((1, &mut sink)),
        },
    )?;
    traj.flush().map_err(|e| Error::io(&traj_path, e))?;
    drop(traj);
    write_snapshot_file(&dir.join("final.bin"), &g, &state)?;

    let mut rep = EstimateReport::new("simulate", cfg.ensemble.seed, 1);
    let l = Some(lambda);
    for (q, v) in [
        ("sup_h_norm_sq", stats.sup_h_norm_sq),
        ("int_grad_sq", stats.int_grad_sq),
        ("int_fprime_sq", stats.int_fprime_sq),
        ("int_beta_sq", stats.int_beta_sq),
        ("sup_grad_norm_sq", stats.sup_grad_norm_sq),
        ("int_laplacian_sq", stats.int_laplacian_sq),
        ("excursion_fraction", stats.excursion_fraction()),
        ("final_sup_norm", state.u.sup_norm()),
    ] {
        rep.rows.push(ReportRow::value(q, l, v));
    }
    let residual = stepper::weak_residual_check(&g, &state, &g.constant(1.0))?;
    rep.rows.push(ReportRow::value("weak_residual_const", l, residual));
    rep.checks.push(experiments::Check::holds("final state finite", state.u.is_finite()));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.as_str().parse::<Command>().unwrap(), c);
        }
        assert!("bogus".parse::<Command>().is_err());
    }
}
