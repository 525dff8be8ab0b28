//! Monte Carlo studies for the a-priori estimates of the regularized problem.
//!
//! Expectations are empirical means over `M` independent replicates. The
//! estimates only assert that some constant exists, so each study measures the
//! relevant path functional across regularization levels (or perturbation
//! sizes) and checks that it stays inside a fixed band.
//!
//! Coupled runs (different `lambda`, perturbed data) share the seed and the
//! replicate index, hence consume the same increments; this is verified by
//! comparing the increment digests of all members.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid};
use crate::noise::{self, NoiseFamily, NoiseSpec};
use crate::potential::{GaugeOrder, PotentialParams, YosidaLevel};
use crate::stepper::{self, Forcing, PathStats, Problem, Reaction, StepperConfig, TrajectoryState};

/// Generator of the initial datum; random variants draw from the replicate's
/// own keyed stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Constant { value: f64 },
    /// `amplitude * cos(mode * pi * x / L)` along the first axis.
    Cosine { amplitude: f64, mode: u32 },
    /// Gaussian bump centered in the domain.
    SmoothBump { amplitude: f64, width: f64 },
    /// Random cosine series with coefficients `amplitude * xi_k / k`, clipped to
    /// `[-1 + clamp, 1 - clamp]`.
    RandomFourier { modes: u32, amplitude: f64, clamp: f64 },
}

const INITIAL_DOMAIN: u64 = 0x7530_6765_6e;

impl InitialCondition {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialCondition::Constant { value } => {
                if !(value.abs() < 1.0) {
                    return Err(Error::invalid("initial.value", format!("|m0| < 1 required, got {value}")));
                }
            }
            InitialCondition::Cosine { amplitude, .. } => {
                if !(amplitude.abs() < 1.0) {
                    return Err(Error::invalid("initial.amplitude", format!("|amplitude| < 1 required, got {amplitude}")));
                }
            }
            InitialCondition::SmoothBump { amplitude, width } => {
                if !(amplitude.abs() < 1.0) {
                    return Err(Error::invalid("initial.amplitude", format!("|amplitude| < 1 required, got {amplitude}")));
                }
                if !(width > 0.0) {
                    return Err(Error::invalid("initial.width", format!("must be positive, got {width}")));
                }
            }
            InitialCondition::RandomFourier { clamp, amplitude, .. } => {
                if !(clamp > 0.0 && clamp < 1.0) {
                    return Err(Error::invalid("initial.clamp", format!("need 0 < delta < 1, got {clamp}")));
                }
                if !(amplitude.is_finite() && amplitude >= 0.0) {
                    return Err(Error::invalid("initial.amplitude", format!("must be >= 0, got {amplitude}")));
                }
            }
        }
        Ok(())
    }

    pub fn generate(&self, g: &Grid, seed: u64, replicate: u64) -> Result<Field> {
        self.validate()?;
        let ext = g.extent().to_vec();
        let pi = std::f64::consts::PI;
        let u = match *self {
            InitialCondition::Constant { value } => g.constant(value),
            InitialCondition::Cosine { amplitude, mode } => {
                g.sample(|x| amplitude * (mode as f64 * pi * x[0] / ext[0]).cos())
            }
            InitialCondition::SmoothBump { amplitude, width } => g.sample(|x| {
                let r2: f64 = x.iter().zip(&ext).map(|(xi, l)| (xi - 0.5 * l).powi(2)).sum();
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }),
            InitialCondition::RandomFourier { modes, amplitude, clamp } => {
                use rand_distr::{Distribution, StandardNormal};
                let mut rng = noise::keyed_rng(seed, INITIAL_DOMAIN, replicate, 0);
                let mut terms = Vec::new();
                let ky_max = if g.dim() == 2 { modes } else { 0 };
                for kx in 0..=modes {
                    for ky in 0..=ky_max {
                        let k = kx + ky;
                        if k == 0 || k > modes {
                            continue;
                        }
                        let xi: f64 = StandardNormal.sample(&mut rng);
                        terms.push((kx as f64, ky as f64, amplitude * xi / k as f64));
                    }
                }
                let lim = 1.0 - clamp;
                g.sample(|x| {
                    let v: f64 = terms
                        .iter()
                        .map(|&(kx, ky, a)| {
                            let cy = if x.len() == 2 { (ky * pi * x[1] / ext[1]).cos() } else { 1.0 };
                            a * (kx * pi * x[0] / ext[0]).cos() * cy
                        })
                        .sum();
                    v.clamp(-lim, lim)
                })
            }
        };
        Ok(u)
    }
}

/// Data shared by every run of an ensemble.
#[derive(Debug, Clone)]
pub struct BaseRun {
    pub grid: Grid,
    pub params: PotentialParams,
    pub noise: NoiseSpec,
    pub stepper: StepperConfig,
    pub initial: InitialCondition,
    pub forcing: Forcing,
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub replicates: usize,
    pub seed: u64,
    pub lambda_levels: Vec<f64>,
    pub base: BaseRun,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::invalid("ensemble.replicates", format!("M >= 2 required, got {}", self.replicates)));
        }
        if self.lambda_levels.is_empty() {
            return Err(Error::invalid("ensemble.lambda_levels", "at least one level required"));
        }
        for w in self.lambda_levels.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::invalid("ensemble.lambda_levels", "levels must be strictly decreasing"));
            }
        }
        for &l in &self.lambda_levels {
            YosidaLevel::new(l).map_err(|_| Error::invalid("ensemble.lambda_levels", format!("{l} not in (0, 1)")))?;
        }
        self.base.stepper.validate()?;
        self.base.noise.validate()?;
        self.base.initial.validate()
    }

    fn problem(&self, lambda: f64, noise: &NoiseSpec, forcing: Forcing) -> Result<Problem> {
        let reaction = Reaction::new(&self.base.params, Some(YosidaLevel::new(lambda)?))?;
        Problem::new(
            self.base.grid.clone(),
            reaction,
            noise.clone(),
            forcing,
            self.base.stepper.clone(),
            self.seed,
        )
    }
}

/// Mean, standard error and normal-approximation 95% interval of i.i.d. samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let std_err = (var / n as f64).sqrt();
        Self {
            mean,
            std_err,
            ci_low: mean - 1.96 * std_err,
            ci_high: mean + 1.96 * std_err,
            n,
        }
    }
}

/// Pathwise distance between two coupled trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairStats {
    /// `sup_t ||u_a - u_b||_H^2`
    pub sup_h_sq: f64,
    /// `int ||grad(u_a - u_b)||^2 dt`
    pub int_grad_sq: f64,
    /// `int ||u_a - u_b||_H^2 dt`
    pub int_h_sq: f64,
}

impl PairStats {
    fn observe(&mut self, g: &Grid, a: &TrajectoryState, b: &TrajectoryState, weight: f64) -> Result<()> {
        let d = a.u.sub(&b.u);
        let n = grid::norms(g, &d)?;
        self.sup_h_sq = self.sup_h_sq.max(n.h_norm_sq);
        self.int_grad_sq += weight * n.grad_norm_sq;
        self.int_h_sq += weight * n.h_norm_sq;
        Ok(())
    }
}

/// One member of a coupled run.
#[derive(Debug, Clone)]
pub struct Member {
    pub problem: Problem,
    pub u0: Field,
}

#[derive(Debug, Clone)]
pub struct CoupledOutcome {
    pub paths: Vec<PathStats>,
    pub pairs: Vec<PairStats>,
}

/// Steps all members in lockstep for one replicate and records the path
/// statistics of each member and the distances of the requested pairs.
pub fn run_coupled(
    members: &[Member],
    replicate: u64,
    gauge_orders: &[GaugeOrder],
    pairs: &[(usize, usize)],
) -> Result<CoupledOutcome> {
    let first = members.first().ok_or_else(|| Error::invalid("members", "empty coupled run"))?;
    let steps = first.problem.cfg.steps();
    let dt = first.problem.cfg.dt;
    for m in members {
        if m.problem.cfg.steps() != steps || m.problem.cfg.dt != dt || m.problem.grid != first.problem.grid {
            return Err(Error::invalid("members", "coupled members must share grid, dt and horizon"));
        }
    }
    let g = &first.problem.grid;
    let mut states: Vec<TrajectoryState> = members
        .iter()
        .map(|m| TrajectoryState::new(m.u0.clone(), replicate))
        .collect();
    let mut paths: Vec<PathStats> = members.iter().map(|_| PathStats::new(gauge_orders)).collect();
    let mut pair_stats = vec![PairStats::default(); pairs.len()];

    for m in 0..=steps {
        let weight = if m < steps { dt } else { 0.0 };
        for ((s, p), member) in states.iter().zip(paths.iter_mut()).zip(members) {
            p.observe(s, &member.problem, weight)?;
        }
        for (ps, &(a, b)) in pair_stats.iter_mut().zip(pairs) {
            ps.observe(g, &states[a], &states[b], weight)?;
        }
        if m == steps {
            break;
        }
        for (i, (s, member)) in states.iter_mut().zip(members).enumerate() {
            stepper::step(s, &member.problem)
                .map_err(|e| e.context(format!("member {i}, replicate {replicate}, step {m}")))?;
        }
    }
    Ok(CoupledOutcome {
        paths,
        pairs: pair_stats,
    })
}

/// Runs `build(replicate)` for every replicate in parallel; results are in
/// replicate order regardless of the number of worker threads.
fn fan_out<T: Send>(replicates: usize, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..replicates as u64).into_par_iter().map(&f).collect()
}

fn coupling_intact(outcomes: &[CoupledOutcome]) -> bool {
    outcomes.iter().all(|o| {
        let d = o.paths[0].increment_digest;
        o.paths.iter().all(|p| p.increment_digest == d)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub quantity: String,
    pub lambda: Option<f64>,
    pub mean: f64,
    pub std_err: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub replicates: Option<usize>,
}

impl ReportRow {
    pub fn estimate(quantity: &str, lambda: Option<f64>, e: Estimate) -> Self {
        Self {
            quantity: quantity.to_string(),
            lambda,
            mean: e.mean,
            std_err: Some(e.std_err),
            ci_low: Some(e.ci_low),
            ci_high: Some(e.ci_high),
            replicates: Some(e.n),
        }
    }

    pub fn value(quantity: &str, lambda: Option<f64>, v: f64) -> Self {
        Self {
            quantity: quantity.to_string(),
            lambda,
            mean: v,
            std_err: None,
            ci_low: None,
            ci_high: None,
            replicates: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    /// Passes when `value <= threshold` (NaN fails).
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= threshold,
            value,
            threshold,
        }
    }

    pub fn holds(name: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            passed,
            value: if passed { 1.0 } else { 0.0 },
            threshold: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub study: String,
    pub seed: u64,
    pub replicates: usize,
    pub config_hash: String,
    pub rows: Vec<ReportRow>,
    pub checks: Vec<Check>,
}

impl EstimateReport {
    pub fn new(study: &str, seed: u64, replicates: usize) -> Self {
        Self {
            study: study.to_string(),
            seed,
            replicates,
            config_hash: String::new(),
            rows: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn row(&self, quantity: &str, lambda: Option<f64>) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.quantity == quantity && r.lambda == lambda)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// One CSV row per `(quantity, lambda)`.
    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["quantity", "lambda", "mean", "std_err", "ci_low", "ci_high", "replicates"])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.rows {
            out.write_record([
                r.quantity.clone(),
                opt(r.lambda),
                format!("{:e}", r.mean),
                opt(r.std_err),
                opt(r.ci_low),
                opt(r.ci_high),
                r.replicates.map(|n| n.to_string()).unwrap_or_default(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// `max / min` of positive values; 1 when all are zero.
fn spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 && min == 0.0 {
        1.0
    } else {
        max / min
    }
}

/// Uniform-bound quantities recorded per regularization level.
pub const UNIFORM_QUANTITIES: [&str; 4] = ["sup_h_norm_sq", "int_grad_sq", "int_fprime_sq", "int_beta_sq"];
pub const STRONG_QUANTITIES: [&str; 2] = ["sup_grad_norm_sq", "int_laplacian_sq"];

fn path_quantity(p: &PathStats, q: &str) -> f64 {
    match q {
        "sup_h_norm_sq" => p.sup_h_norm_sq,
        "int_grad_sq" => p.int_grad_sq,
        "int_fprime_sq" => p.int_fprime_sq,
        "int_beta_sq" => p.int_beta_sq,
        "sup_grad_norm_sq" => p.sup_grad_norm_sq,
        "int_laplacian_sq" => p.int_laplacian_sq,
        _ => f64::NAN,
    }
}

/// Band for `max/min` across levels in the uniform and strong studies.
pub const LAMBDA_UNIFORMITY_BAND: f64 = 1.2;
/// Largest admissible `Delta(lambda/2) / Delta(lambda)` in the Cauchy study.
pub const CAUCHY_RATIO_MAX: f64 = 0.75;
/// Smallest admissible empirical order `log2(Delta(lambda) / Delta(lambda/2))`.
pub const CAUCHY_ORDER_MIN: f64 = 0.8;
pub const DEPENDENCE_STABILITY: f64 = 0.5;
pub const DERIVATIVE_STABILITY: f64 = 0.3;
pub const EXCURSION_FRACTION_MAX: f64 = 0.01;

/// All `lambda` levels of one replicate run in lockstep with common noise.
#[derive(Debug, Clone)]
pub struct LambdaEnsemble {
    pub seed: u64,
    pub lambda_levels: Vec<f64>,
    pub noise_active: bool,
    pub outcomes: Vec<CoupledOutcome>,
}

impl LambdaEnsemble {
    pub fn run(cfg: &EnsembleConfig) -> Result<Self> {
        cfg.validate()?;
        let problems: Vec<Problem> = cfg
            .lambda_levels
            .iter()
            .map(|&l| cfg.problem(l, &cfg.base.noise, cfg.base.forcing.clone()))
            .collect::<Result<_>>()?;
        let pairs: Vec<(usize, usize)> = (0..problems.len().saturating_sub(1)).map(|i| (i, i + 1)).collect();
        let outcomes = fan_out(cfg.replicates, |r| {
            let u0 = cfg.base.initial.generate(&cfg.base.grid, cfg.seed, r)?;
            let members: Vec<Member> = problems
                .iter()
                .map(|p| Member {
                    problem: p.clone(),
                    u0: u0.clone(),
                })
                .collect();
            run_coupled(&members, r, &[], &pairs)
        })?;
        Ok(Self {
            seed: cfg.seed,
            lambda_levels: cfg.lambda_levels.clone(),
            noise_active: cfg.base.noise.modes > 0 && cfg.base.noise.amplitude > 0.0,
            outcomes,
        })
    }

    pub fn replicates(&self) -> usize {
        self.outcomes.len()
    }

    pub fn level_estimate(&self, level: usize, quantity: &str) -> Estimate {
        let xs: Vec<f64> = self.outcomes.iter().map(|o| path_quantity(&o.paths[level], quantity)).collect();
        Estimate::from_samples(&xs)
    }

    /// `Delta` for pair `(i, i+1)`: `E sup ||du||^2 + E int ||grad du||^2`.
    pub fn cauchy_estimate(&self, pair: usize) -> Estimate {
        let xs: Vec<f64> = self
            .outcomes
            .iter()
            .map(|o| o.pairs[pair].sup_h_sq + o.pairs[pair].int_grad_sq)
            .collect();
        Estimate::from_samples(&xs)
    }

    fn banded_report(&self, study: &str, quantities: &[&str]) -> EstimateReport {
        let mut rep = EstimateReport::new(study, self.seed, self.replicates());
        for q in quantities {
            let mut means = Vec::new();
            for (i, &l) in self.lambda_levels.iter().enumerate() {
                let e = self.level_estimate(i, q);
                means.push(e.mean);
                rep.rows.push(ReportRow::estimate(q, Some(l), e));
                if self.noise_active {
                    rep.checks.push(Check::holds(
                        format!("{q} CI non-degenerate at lambda={l}"),
                        e.std_err > 0.0 && e.std_err.is_finite(),
                    ));
                }
            }
            let s = spread(&means);
            rep.rows.push(ReportRow::value(&format!("{q}_lambda_spread"), None, s));
            rep.checks.push(Check::at_most(format!("{q} max/min across lambda"), s, LAMBDA_UNIFORMITY_BAND));
        }
        rep
    }

    pub fn uniform_report(&self) -> EstimateReport {
        self.banded_report("uniform", &UNIFORM_QUANTITIES)
    }

    pub fn strong_report(&self) -> EstimateReport {
        self.banded_report("strong", &STRONG_QUANTITIES)
    }

    pub fn cauchy_report(&self) -> EstimateReport {
        let mut rep = EstimateReport::new("cauchy", self.seed, self.replicates());
        let deltas: Vec<Estimate> = (0..self.lambda_levels.len().saturating_sub(1))
            .map(|i| self.cauchy_estimate(i))
            .collect();
        for (i, e) in deltas.iter().enumerate() {
            rep.rows.push(ReportRow::estimate("delta", Some(self.lambda_levels[i]), *e));
        }
        for (i, w) in deltas.windows(2).enumerate() {
            let l = self.lambda_levels[i + 1];
            let ratio = w[1].mean / w[0].mean;
            let order = (w[0].mean / w[1].mean).log2();
            rep.rows.push(ReportRow::value("delta_ratio", Some(l), ratio));
            rep.rows.push(ReportRow::value("empirical_order", Some(l), order));
            rep.checks.push(Check::holds(
                format!("delta strictly decreasing at lambda={l}"),
                w[1].mean < w[0].mean,
            ));
            rep.checks.push(Check::at_most(format!("delta ratio at lambda={l}"), ratio, CAUCHY_RATIO_MAX));
            rep.checks.push(Check::at_least(format!("empirical order at lambda={l}"), order, CAUCHY_ORDER_MIN));
        }
        rep.checks.push(Check::holds("common increments across lambda levels", coupling_intact(&self.outcomes)));
        rep
    }
}

pub fn uniform_bounds_study(cfg: &EnsembleConfig) -> Result<EstimateReport> {
    Ok(LambdaEnsemble::run(cfg)?.uniform_report())
}

pub fn cauchy_study(cfg: &EnsembleConfig) -> Result<EstimateReport> {
    if cfg.lambda_levels.len() < 3 {
        return Err(Error::invalid("ensemble.lambda_levels", "the Cauchy study needs at least 3 levels"));
    }
    Ok(LambdaEnsemble::run(cfg)?.cauchy_report())
}

pub fn strong_solution_study(cfg: &EnsembleConfig) -> Result<EstimateReport> {
    let u0 = cfg.base.initial.generate(&cfg.base.grid, cfg.seed, 0)?;
    let g0 = grid::norms(&cfg.base.grid, &u0)?.grad_norm_sq;
    if !g0.is_finite() {
        return Err(Error::invalid("initial", "the strong-solution study needs a V-valued initial datum"));
    }
    Ok(LambdaEnsemble::run(cfg)?.strong_report())
}

/// Perturbation kinds for [`dependence_study`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    /// `u0 + delta * cos(pi x / L)`.
    Initial(f64),
    /// `g + delta`.
    Forcing(f64),
}

impl Perturbation {
    fn label(&self) -> (&'static str, f64) {
        match *self {
            Perturbation::Initial(d) => ("u0", d),
            Perturbation::Forcing(d) => ("g", d),
        }
    }
}

/// Pathwise Lipschitz dependence on `(u0, g)` at the smallest level.
///
/// LHS: `sqrt(E sup ||du||_H^2) + sqrt(E int ||du||_V^2)`;
/// RHS: `sqrt(E ||du0||_H^2) + sqrt(E int ||dg||_{V*}^2)`.
pub fn dependence_study(cfg: &EnsembleConfig, perturbations: &[Perturbation]) -> Result<EstimateReport> {
    cfg.validate()?;
    let g = &cfg.base.grid;
    let lambda = *cfg.lambda_levels.last().expect("validated non-empty");
    let l0 = g.extent()[0];
    let shape = g.sample(|x| (std::f64::consts::PI * x[0] / l0).cos());
    let t_end = cfg.base.stepper.steps() as f64 * cfg.base.stepper.dt;

    let base_problem = cfg.problem(lambda, &cfg.base.noise, cfg.base.forcing.clone())?;
    let mut problems = vec![base_problem.clone()];
    for p in perturbations {
        problems.push(match *p {
            Perturbation::Initial(_) => base_problem.clone(),
            Perturbation::Forcing(d) => {
                let f = cfg.base.forcing.to_field(g).add(&g.constant(d));
                cfg.problem(lambda, &cfg.base.noise, Forcing::Field(f))?
            }
        });
    }
    let pairs: Vec<(usize, usize)> = (1..problems.len()).map(|i| (0, i)).collect();
    let outcomes = fan_out(cfg.replicates, |r| {
        let u0 = cfg.base.initial.generate(g, cfg.seed, r)?;
        let mut members = vec![Member {
            problem: problems[0].clone(),
            u0: u0.clone(),
        }];
        for (p, prob) in perturbations.iter().zip(&problems[1..]) {
            let mut v = u0.clone();
            if let Perturbation::Initial(d) = *p {
                v.axpy(d, &shape);
                if v.sup_norm() >= 1.0 {
                    return Err(Error::invalid("perturbation", format!("u0 + {d} cos leaves (-1, 1)")));
                }
            }
            members.push(Member {
                problem: prob.clone(),
                u0: v,
            });
        }
        run_coupled(&members, r, &[], &pairs)
    })?;

    let mut rep = EstimateReport::new("dependence", cfg.seed, cfg.replicates);
    let shape_h = grid::norms(g, &shape)?.h_norm_sq.sqrt();
    let mut ratios: Vec<(&'static str, f64)> = Vec::new();
    for (i, p) in perturbations.iter().enumerate() {
        let (kind, delta) = p.label();
        let sup: Vec<f64> = outcomes.iter().map(|o| o.pairs[i].sup_h_sq).collect();
        let int_v: Vec<f64> = outcomes
            .iter()
            .map(|o| o.pairs[i].int_h_sq + o.pairs[i].int_grad_sq)
            .collect();
        let e_sup = Estimate::from_samples(&sup);
        let e_int = Estimate::from_samples(&int_v);
        let lhs = e_sup.mean.sqrt() + e_int.mean.sqrt();
        let rhs = match *p {
            Perturbation::Initial(d) => d.abs() * shape_h,
            Perturbation::Forcing(d) => (t_end * grid::v_star_norm_sq(g, &g.constant(d))?).sqrt(),
        };
        let ratio = lhs / rhs;
        let q = format!("{kind}_delta={delta:e}");
        rep.rows.push(ReportRow::estimate(&format!("{q}_sup_h_sq"), Some(lambda), e_sup));
        rep.rows.push(ReportRow::estimate(&format!("{q}_int_v_sq"), Some(lambda), e_int));
        rep.rows.push(ReportRow::value(&format!("{q}_lhs"), Some(lambda), lhs));
        rep.rows.push(ReportRow::value(&format!("{q}_rhs"), Some(lambda), rhs));
        rep.rows.push(ReportRow::value(&format!("{q}_ratio"), Some(lambda), ratio));
        rep.checks.push(Check::holds(format!("{q} ratio finite"), ratio.is_finite()));
        ratios.push((kind, ratio));
    }
    for kind in ["u0", "g"] {
        let mut rs: Vec<f64> = ratios.iter().filter(|(k, _)| *k == kind).map(|(_, r)| *r).collect();
        if rs.len() < 2 {
            continue;
        }
        rs.sort_by(|a, b| a.total_cmp(b));
        let median = rs[rs.len() / 2];
        let worst = rs.iter().map(|r| (r / median - 1.0).abs()).fold(0.0, f64::max);
        rep.rows.push(ReportRow::value(&format!("{kind}_ratio_median"), Some(lambda), median));
        rep.checks.push(Check::at_most(
            format!("{kind} ratio deviation from median"),
            worst,
            DEPENDENCE_STABILITY,
        ));
    }
    rep.checks.push(Check::holds("common increments across perturbations", coupling_intact(&outcomes)));
    Ok(rep)
}

/// Singularity-gauge statistics for order `n` at the two smallest levels, with
/// poly_flat noise of flatness `n + 1`.
///
/// Reports `sup_t E int_D G_n(u(t))` and `E int_0^T int_D |G_n'(u)|`, using
/// only samples with `|u| < 1`; the excursion fraction is reported separately.
pub fn derivative_study(cfg: &EnsembleConfig, order: GaugeOrder) -> Result<EstimateReport> {
    cfg.validate()?;
    if cfg.base.forcing.sup_norm() > 1.0 {
        return Err(Error::invalid("forcing", "the derivative study needs ||g||_inf <= 1"));
    }
    let n = order.get();
    let noise = NoiseSpec {
        family: NoiseFamily::PolyFlat,
        flatness: n + 1,
        ..cfg.base.noise.clone()
    };
    let levels: Vec<f64> = cfg.lambda_levels.iter().rev().take(2).rev().cloned().collect();
    let problems: Vec<Problem> = levels
        .iter()
        .map(|&l| cfg.problem(l, &noise, cfg.base.forcing.clone()))
        .collect::<Result<_>>()?;
    let outcomes = fan_out(cfg.replicates, |r| {
        let u0 = cfg.base.initial.generate(&cfg.base.grid, cfg.seed, r)?;
        if u0.sup_norm() >= 1.0 {
            return Err(Error::invalid("initial", "G_n(u0) must be integrable"));
        }
        let members: Vec<Member> = problems
            .iter()
            .map(|p| Member {
                problem: p.clone(),
                u0: u0.clone(),
            })
            .collect();
        run_coupled(&members, r, &[order], &[])
    })?;

    let mut rep = EstimateReport::new(&format!("derivative_n{n}"), cfg.seed, cfg.replicates);
    let mut sup_means = Vec::new();
    let mut int_means = Vec::new();
    for (i, &l) in levels.iter().enumerate() {
        let series_len = outcomes[0].paths[i].gauges[0].series.len();
        let mut best = (f64::NEG_INFINITY, 0usize);
        for t in 0..series_len {
            let m = outcomes.iter().map(|o| o.paths[i].gauges[0].series[t]).sum::<f64>() / outcomes.len() as f64;
            if m > best.0 {
                best = (m, t);
            }
        }
        let at: Vec<f64> = outcomes.iter().map(|o| o.paths[i].gauges[0].series[best.1]).collect();
        let e_sup = Estimate::from_samples(&at);
        let ints: Vec<f64> = outcomes.iter().map(|o| o.paths[i].gauges[0].int_abs_derivative).collect();
        let e_int = Estimate::from_samples(&ints);
        let (exc, tot) = outcomes.iter().fold((0u64, 0u64), |(a, b), o| {
            (a + o.paths[i].excursion_samples, b + o.paths[i].total_samples)
        });
        let frac = exc as f64 / tot as f64;
        rep.rows.push(ReportRow::estimate("sup_t_mean_int_gauge", Some(l), e_sup));
        rep.rows.push(ReportRow::estimate("mean_int_abs_gauge_derivative", Some(l), e_int));
        rep.rows.push(ReportRow::value("excursion_fraction", Some(l), frac));
        rep.checks.push(Check::holds(
            format!("gauge statistics finite at lambda={l}"),
            e_sup.mean.is_finite() && e_int.mean.is_finite(),
        ));
        sup_means.push(e_sup.mean);
        int_means.push(e_int.mean);
        if i + 1 == levels.len() {
            rep.checks.push(Check::at_most(
                format!("excursion fraction at lambda={l}"),
                frac,
                EXCURSION_FRACTION_MAX,
            ));
        }
    }
    if levels.len() == 2 {
        let d_sup = (sup_means[1] / sup_means[0] - 1.0).abs();
        let d_int = (int_means[1] / int_means[0] - 1.0).abs();
        rep.rows.push(ReportRow::value("sup_gauge_halving_change", Some(levels[1]), d_sup));
        rep.rows.push(ReportRow::value("int_gauge_derivative_halving_change", Some(levels[1]), d_int));
        rep.checks.push(Check::at_most("G_n statistic change under lambda halving", d_sup, DERIVATIVE_STABILITY));
        rep.checks.push(Check::at_most("|G_n'| statistic change under lambda halving", d_int, DERIVATIVE_STABILITY));
    }
    Ok(rep)
}

/// Observed convergence orders of the deterministic scheme.
#[derive(Debug, Clone)]
pub struct OracleOrders {
    pub temporal_errors: Vec<(f64, f64)>,
    pub spatial_errors: Vec<(f64, f64)>,
    pub ode_errors: Vec<(f64, f64)>,
}

fn orders(errors: &[(f64, f64)]) -> Vec<f64> {
    errors
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect()
}

impl OracleOrders {
    pub fn temporal_orders(&self) -> Vec<f64> {
        orders(&self.temporal_errors)
    }
    pub fn spatial_orders(&self) -> Vec<f64> {
        orders(&self.spatial_errors)
    }
    pub fn ode_orders(&self) -> Vec<f64> {
        orders(&self.ode_errors)
    }
}

fn deterministic_problem(grid: Grid, reaction: Reaction, dt: f64, t_end: f64) -> Result<Problem> {
    let mut cfg = StepperConfig::new(dt, t_end)?;
    cfg.outer_newton_tol = 1e-13;
    cfg.linear_tol = 1e-14;
    Problem::new(grid, reaction, NoiseSpec::off(), Forcing::Zero, cfg, 0)
}

/// Sup-norm error of the heat limit (no potential, no noise) started from
/// `amplitude * cos(pi x / L)`, against (a) the exact solution of the
/// semi-discrete system for the temporal study and (b) the continuum solution
/// with `dt ~ h^2` for the spatial study.
pub fn heat_errors(length: f64, amplitude: f64, t_end: f64) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    let pi = std::f64::consts::PI;
    let k = pi / length;
    let mut temporal = Vec::new();
    let cells = 64;
    let grid = Grid::line(length, cells)?;
    let h = length / cells as f64;
    let mu_h = 4.0 / (h * h) * (0.5 * k * h).sin().powi(2);
    for div in [10usize, 20, 40] {
        let dt = t_end / div as f64;
        let p = deterministic_problem(grid.clone(), Reaction::Free, dt, t_end)?;
        let u0 = grid.sample(|x| amplitude * (k * x[0]).cos());
        let (state, _) = stepper::simulate(u0.clone(), &p, 0, Default::default())?;
        let decay = (-mu_h * t_end).exp();
        let err = state
            .u
            .values()
            .iter()
            .zip(u0.values())
            .map(|(u, v)| (u - decay * v).abs())
            .fold(0.0, f64::max);
        temporal.push((dt, err));
    }
    let mut spatial = Vec::new();
    for cells in [8usize, 16, 32] {
        let grid = Grid::line(length, cells)?;
        let h = length / cells as f64;
        let div = (t_end / (0.05 * h * h)).ceil() as usize;
        let dt = t_end / div as f64;
        let p = deterministic_problem(grid.clone(), Reaction::Free, dt, t_end)?;
        let u0 = grid.sample(|x| amplitude * (k * x[0]).cos());
        let (state, _) = stepper::simulate(u0, &p, 0, Default::default())?;
        let exact = grid.sample(|x| amplitude * (-k * k * t_end).exp() * (k * x[0]).cos());
        let err = state.u.sub(&exact).sup_norm();
        spatial.push((h, err));
    }
    Ok((temporal, spatial))
}

/// Classical RK4 for `u' = -F'_lambda(u)`, used as the scalar reference.
pub fn scalar_reference(reaction: &Reaction, u0: f64, t_end: f64, steps: usize) -> Result<f64> {
    let h = t_end / steps as f64;
    let f = |u: f64| reaction.fprime(u).map(|v| -v);
    let mut u = u0;
    for _ in 0..steps {
        let k1 = f(u)?;
        let k2 = f(u + 0.5 * h * k1)?;
        let k3 = f(u + 0.5 * h * k2)?;
        let k4 = f(u + h * k3)?;
        u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    Ok(u)
}

/// Error of the scheme on spatially constant data against the scalar ODE.
pub fn ode_errors(c: f64, lambda: f64, u0: f64, t_end: f64) -> Result<Vec<(f64, f64)>> {
    let reaction = Reaction::Regularized {
        c,
        level: YosidaLevel::new(lambda)?,
    };
    let reference = scalar_reference(&reaction, u0, t_end, 200_000)?;
    let grid = Grid::line(1.0, 2)?;
    let mut out = Vec::new();
    for div in [25usize, 50, 100] {
        let dt = t_end / div as f64;
        let p = deterministic_problem(grid.clone(), reaction, dt, t_end)?;
        let (state, _) = stepper::simulate(grid.constant(u0), &p, 0, Default::default())?;
        out.push((dt, (state.u[0] - reference).abs()));
    }
    Ok(out)
}

pub const TEMPORAL_ORDER_MIN: f64 = 0.8;
pub const SPATIAL_ORDER_MIN: f64 = 1.6;

/// Deterministic convergence oracles backing the stepper.
pub fn heat_and_ode_oracles(cfg: &EnsembleConfig) -> Result<(EstimateReport, OracleOrders)> {
    let length = cfg.base.grid.extent()[0];
    let (temporal, spatial) = heat_errors(length, 0.5, 0.1)?;
    let c = cfg.base.params.concavity();
    let lambda = *cfg.lambda_levels.last().unwrap_or(&0.025);
    let ode = ode_errors(c, lambda, 0.3, 0.5)?;
    let orders = OracleOrders {
        temporal_errors: temporal,
        spatial_errors: spatial,
        ode_errors: ode,
    };
    let mut rep = EstimateReport::new("oracles", cfg.seed, 0);
    for (name, errs) in [
        ("heat_temporal_error", &orders.temporal_errors),
        ("heat_spatial_error", &orders.spatial_errors),
        ("ode_error", &orders.ode_errors),
    ] {
        for &(step, e) in errs.iter() {
            rep.rows.push(ReportRow::value(&format!("{name}@{step:e}"), None, e));
        }
    }
    for (name, os, min) in [
        ("heat temporal order", orders.temporal_orders(), TEMPORAL_ORDER_MIN),
        ("heat spatial order", orders.spatial_orders(), SPATIAL_ORDER_MIN),
        ("ode temporal order", orders.ode_orders(), TEMPORAL_ORDER_MIN),
    ] {
        for (i, o) in os.iter().enumerate() {
            rep.rows.push(ReportRow::value(&format!("{}_{}", name.replace(' ', "_"), i), None, *o));
            rep.checks.push(Check::at_least(format!("{name} #{i}"), *o, min));
        }
    }
    Ok((rep, orders))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(noise: NoiseSpec, initial: InitialCondition) -> EnsembleConfig {
        EnsembleConfig {
            replicates: 4,
            seed: 5,
            lambda_levels: vec![0.2, 0.1, 0.05],
            base: BaseRun {
                grid: Grid::line(1.0, 16).unwrap(),
                params: PotentialParams::logarithmic(2.0).unwrap(),
                noise,
                stepper: StepperConfig::new(0.01, 0.1).unwrap(),
                initial,
                forcing: Forcing::Zero,
            },
        }
    }

    #[test]
    fn zero_data_gives_zero_statistics() {
        let cfg = small_cfg(NoiseSpec::off(), InitialCondition::Constant { value: 0.0 });
        let ens = LambdaEnsemble::run(&cfg).unwrap();
        let rep = ens.uniform_report();
        for q in UNIFORM_QUANTITIES {
            for &l in &cfg.lambda_levels {
                assert_eq!(rep.row(q, Some(l)).unwrap().mean, 0.0);
            }
        }
        assert!(rep.passed());
        let strong = ens.strong_report();
        assert!(strong.rows.iter().filter(|r| r.replicates.is_some()).all(|r| r.mean == 0.0));
    }

    #[test]
    fn identical_levels_have_zero_distance() {
        let mut cfg = small_cfg(
            NoiseSpec::sine(4, 2.0, 0.5).unwrap(),
            InitialCondition::Cosine { amplitude: 0.5, mode: 1 },
        );
        cfg.validate().unwrap();
        let p = cfg.problem(0.1, &cfg.base.noise, Forcing::Zero).unwrap();
        let u0 = cfg.base.initial.generate(&cfg.base.grid, 5, 0).unwrap();
        let members = vec![
            Member { problem: p.clone(), u0: u0.clone() },
            Member { problem: p, u0 },
        ];
        let out = run_coupled(&members, 0, &[], &[(0, 1)]).unwrap();
        assert_eq!(out.pairs[0], PairStats::default());
        assert_eq!(out.paths[0], out.paths[1]);
        cfg.lambda_levels = vec![0.1, 0.1];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_perturbation_has_zero_lhs() {
        let cfg = small_cfg(
            NoiseSpec::sine(4, 2.0, 0.5).unwrap(),
            InitialCondition::Cosine { amplitude: 0.5, mode: 1 },
        );
        let rep = dependence_study(&cfg, &[Perturbation::Initial(0.0), Perturbation::Forcing(0.01)]).unwrap();
        let lhs = rep.row("u0_delta=0e0_lhs", Some(0.05)).unwrap();
        assert_eq!(lhs.mean, 0.0);
        let g_lhs = rep.row("g_delta=1e-2_lhs", Some(0.05)).unwrap();
        assert!(g_lhs.mean > 0.0);
    }

    #[test]
    fn gauge_on_zero_path_equals_domain_time() {
        let mut cfg = small_cfg(
            NoiseSpec::sine(4, 2.0, 0.5).unwrap(),
            InitialCondition::Constant { value: 0.0 },
        );
        cfg.base.noise.amplitude = 0.0;
        let rep = derivative_study(&cfg, GaugeOrder::new(2).unwrap()).unwrap();
        // G_n(0) = 1, so int_D G_n = |D| at every time.
        let row = rep.row("sup_t_mean_int_gauge", Some(0.05)).unwrap();
        assert!((row.mean - 1.0).abs() < 1e-14);
        let row = rep.row("mean_int_abs_gauge_derivative", Some(0.05)).unwrap();
        assert_eq!(row.mean, 0.0);
    }

    #[test]
    fn higher_gauge_order_dominates() {
        let cfg = small_cfg(
            NoiseSpec::sine(4, 2.0, 0.5).unwrap(),
            InitialCondition::Cosine { amplitude: 0.6, mode: 1 },
        );
        let a = derivative_study(&cfg, GaugeOrder::new(2).unwrap()).unwrap();
        let b = derivative_study(&cfg, GaugeOrder::new(3).unwrap()).unwrap();
        let q = "sup_t_mean_int_gauge";
        assert!(b.row(q, Some(0.05)).unwrap().mean >= a.row(q, Some(0.05)).unwrap().mean);
    }

    #[test]
    fn random_fourier_is_clamped_and_keyed() {
        let g = Grid::rectangle(1.0, 1.0, 8, 8).unwrap();
        let ic = InitialCondition::RandomFourier { modes: 4, amplitude: 3.0, clamp: 0.05 };
        let a = ic.generate(&g, 1, 0).unwrap();
        assert!(a.sup_norm() <= 0.95 + 1e-15);
        assert_eq!(a, ic.generate(&g, 1, 0).unwrap());
        assert_ne!(a, ic.generate(&g, 1, 1).unwrap());
        assert!(InitialCondition::Constant { value: 1.0 }.validate().is_err());
        assert!(InitialCondition::RandomFourier { modes: 2, amplitude: 1.0, clamp: 0.0 }.validate().is_err());
    }

    #[test]
    fn estimate_statistics() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.std_err - (1.25f64 / 3.0 * 4.0 / 4.0).sqrt() / 1.0 * (1.0f64 / 4.0).sqrt() * 2.0).abs() < 1e-12);
        assert!((e.ci_high - e.ci_low - 2.0 * 1.96 * e.std_err).abs() < 1e-12);
    }

    #[test]
    fn zero_initial_data_oracles() {
        let (t, s) = heat_errors(1.0, 0.0, 0.1).unwrap();
        assert!(t.iter().chain(&s).all(|&(_, e)| e == 0.0));
    }
}
