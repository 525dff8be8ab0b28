//! Semi-implicit Euler-Maruyama integration of the regularized problem
//!
//! ```text
//! du - Delta u dt + F'_lambda(u) dt = g dt + B(J_lambda(u)) dW,   du/dn = 0.
//! ```
//!
//! One step solves `w - dt Delta_h w + dt beta_lambda(w) = u + dt (2c u + g) + B dW`:
//! the monotone part is implicit, the concave part `-2cu`, the forcing and the
//! noise are evaluated at the left endpoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid};
use crate::linalg;
use crate::noise::{self, NoiseIncrement, NoiseKey, NoiseSpec};
use crate::potential::{self, GaugeOrder, PotentialParams, YosidaLevel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "defaults::outer_newton_tol")]
    pub outer_newton_tol: f64,
    #[serde(default = "defaults::outer_newton_max")]
    pub outer_newton_max: usize,
    #[serde(default = "defaults::linear_tol")]
    pub linear_tol: f64,
    #[serde(default = "defaults::linear_max")]
    pub linear_max: usize,
}

mod defaults {
    pub fn outer_newton_tol() -> f64 {
        1e-10
    }
    pub fn outer_newton_max() -> usize {
        50
    }
    pub fn linear_tol() -> f64 {
        1e-12
    }
    pub fn linear_max() -> usize {
        5000
    }
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 0.5,
            outer_newton_tol: defaults::outer_newton_tol(),
            outer_newton_max: defaults::outer_newton_max(),
            linear_tol: defaults::linear_tol(),
            linear_max: defaults::linear_max(),
        }
    }
}

impl StepperConfig {
    pub fn new(dt: f64, t_end: f64) -> Result<Self> {
        let cfg = Self {
            dt,
            t_end,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("stepper.dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::invalid("stepper.t_end", format!("must be positive, got {}", self.t_end)));
        }
        if self.dt > self.t_end {
            return Err(Error::invalid(
                "stepper.dt",
                format!("dt = {} exceeds t_end = {}", self.dt, self.t_end),
            ));
        }
        if !(self.outer_newton_tol > 0.0) || !(self.linear_tol > 0.0) {
            return Err(Error::invalid("stepper tolerances", "must be positive"));
        }
        if self.outer_newton_max == 0 || self.linear_max == 0 {
            return Err(Error::invalid("stepper iteration limits", "must be at least 1"));
        }
        Ok(())
    }

    /// `ceil(t_end / dt)`, ignoring round-off in the quotient.
    pub fn steps(&self) -> usize {
        let q = self.t_end / self.dt;
        let r = q.round();
        if (q - r).abs() <= 1e-9 * q.max(1.0) {
            r as usize
        } else {
            q.ceil() as usize
        }
    }
}

/// Splitting of `F'` into an implicit monotone part and an explicit linear part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reaction {
    /// No potential: the heat equation.
    Free,
    /// `F'_lambda(r) = beta_lambda(r) - 2 c r`.
    Regularized { c: f64, level: YosidaLevel },
    /// `F'(r) = r^3 - r`.
    Polynomial,
}

impl Reaction {
    pub fn new(params: &PotentialParams, level: Option<YosidaLevel>) -> Result<Self> {
        match (params, level) {
            (PotentialParams::Logarithmic { c, .. }, Some(level)) => Ok(Reaction::Regularized { c: *c, level }),
            (PotentialParams::Logarithmic { .. }, None) => Err(Error::invalid(
                "lambda",
                "the logarithmic potential is integrated through its Yosida regularization",
            )),
            (PotentialParams::Polynomial, _) => Ok(Reaction::Polynomial),
        }
    }

    pub fn level(&self) -> Option<&YosidaLevel> {
        match self {
            Reaction::Regularized { level, .. } => Some(level),
            _ => None,
        }
    }

    /// Coefficient `a` of the explicit part `-a r` of `F'`.
    pub fn explicit_coefficient(&self) -> f64 {
        match *self {
            Reaction::Free => 0.0,
            Reaction::Regularized { c, .. } => 2.0 * c,
            Reaction::Polynomial => 1.0,
        }
    }

    /// Monotone part and its derivative at `w`.
    pub fn implicit(&self, w: f64) -> Result<(f64, f64)> {
        match self {
            Reaction::Free => Ok((0.0, 0.0)),
            Reaction::Regularized { level, .. } => {
                let (b, db, _) = potential::yosida_eval(level, w)?;
                Ok((b, db))
            }
            Reaction::Polynomial => Ok((w * w * w, 3.0 * w * w)),
        }
    }

    /// `F'` (regularized when applicable).
    pub fn fprime(&self, r: f64) -> Result<f64> {
        Ok(self.implicit(r)?.0 - self.explicit_coefficient() * r)
    }
}

/// Time-independent external force.
#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    Zero,
    Constant(f64),
    Field(Field),
}

impl Forcing {
    pub fn at(&self, i: usize) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::Constant(v) => *v,
            Forcing::Field(f) => f[i],
        }
    }

    pub fn to_field(&self, g: &Grid) -> Field {
        match self {
            Forcing::Field(f) => f.clone(),
            _ => Field::new((0..g.len()).map(|i| self.at(i)).collect()),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::Constant(v) => v.abs(),
            Forcing::Field(f) => f.sup_norm(),
        }
    }
}

/// Everything one trajectory needs besides its state.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid,
    pub reaction: Reaction,
    pub noise: NoiseSpec,
    pub forcing: Forcing,
    pub cfg: StepperConfig,
    pub seed: u64,
    /// Number of base increments summed into one step. A run with `dt` and
    /// `substeps = 2` sees the same Brownian path as a run with `dt / 2`.
    pub substeps: u64,
}

impl Problem {
    pub fn new(grid: Grid, reaction: Reaction, noise: NoiseSpec, forcing: Forcing, cfg: StepperConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        noise.validate()?;
        if let Forcing::Field(f) = &forcing {
            grid.check(f)?;
        }
        Ok(Self {
            grid,
            reaction,
            noise,
            forcing,
            cfg,
            seed,
            substeps: 1,
        })
    }

    pub fn increment(&self, replicate: u64, step: u64) -> NoiseIncrement {
        let base_dt = self.cfg.dt / self.substeps as f64;
        let mut inc = NoiseIncrement::zeros(self.noise.modes);
        for j in 0..self.substeps {
            let key = NoiseKey {
                replicate,
                step: step * self.substeps + j,
            };
            let part = noise::sample_increments(self.seed, key, &self.noise, base_dt);
            for (a, b) in inc.dw.iter_mut().zip(part.dw) {
                *a += b;
            }
        }
        inc
    }
}

/// Running integrals of the terms of the weak formulation, left-endpoint rule.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakFormRecord {
    pub u0: Field,
    /// `int_0^t u ds`
    pub int_u: Field,
    /// `int_0^t F'_lambda(u) ds`
    pub int_fprime: Field,
    /// `int_0^t g ds`
    pub int_g: Field,
    /// `int_0^t B_lambda(u) dW`
    pub stochastic_integral: Field,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub t: f64,
    pub u: Field,
    pub step_index: u64,
    pub replicate: u64,
    pub running_sup_norm: f64,
    /// `int_0^t ||grad u||^2 ds`
    pub dirichlet_integral: f64,
    pub record: WeakFormRecord,
    /// FNV-1a digest of every increment consumed so far.
    pub increment_digest: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv_extend(mut h: u64, values: &[f64]) -> u64 {
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

impl TrajectoryState {
    pub fn new(u0: Field, replicate: u64) -> Self {
        let zeros = Field::new(vec![0.0; u0.len()]);
        Self {
            t: 0.0,
            running_sup_norm: u0.sup_norm(),
            record: WeakFormRecord {
                u0: u0.clone(),
                int_u: zeros.clone(),
                int_fprime: zeros.clone(),
                int_g: zeros.clone(),
                stochastic_integral: zeros,
            },
            u: u0,
            step_index: 0,
            replicate,
            dirichlet_integral: 0.0,
            increment_digest: FNV_OFFSET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveInfo {
    pub newton_iterations: usize,
    pub linear_iterations: usize,
    pub residual: f64,
}

struct Iterate {
    w: Vec<f64>,
    dphi: Vec<f64>,
    residual: Vec<f64>,
    norm: f64,
}

fn evaluate(g: &Grid, reaction: &Reaction, rhs: &[f64], dt: f64, w: Vec<f64>, lap: &mut [f64]) -> Result<Iterate> {
    g.laplacian_into(&w, lap);
    let mut dphi = vec![0.0; w.len()];
    let mut residual = vec![0.0; w.len()];
    let mut norm = 0.0f64;
    for i in 0..w.len() {
        let (p, dp) = reaction.implicit(w[i])?;
        dphi[i] = dp;
        residual[i] = w[i] - dt * lap[i] + dt * p - rhs[i];
        norm = norm.max(residual[i].abs());
    }
    Ok(Iterate { w, dphi, residual, norm })
}

/// Solves `w - dt Delta_h w + dt phi(w) = rhs` for the monotone part `phi` of the
/// reaction by damped Newton, starting from `warm`. Each Newton correction
/// comes from Jacobi-preconditioned CG on the symmetric positive definite
/// Jacobian `I - dt Delta_h + dt diag(phi'(w))`.
pub fn implicit_solve(
    g: &Grid,
    reaction: &Reaction,
    rhs: &Field,
    dt: f64,
    cfg: &StepperConfig,
    warm: Option<&Field>,
) -> Result<(Field, SolveInfo)> {
    g.check(rhs)?;
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    let n = rhs.len();
    let start = match warm {
        Some(w) => {
            g.check(w)?;
            w.values().to_vec()
        }
        None => rhs.values().to_vec(),
    };
    let neg_lap_diag = g.neg_laplacian_diag();
    let mut lap = vec![0.0; n];
    let mut it = evaluate(g, reaction, rhs.values(), dt, start, &mut lap)?;
    let mut info = SolveInfo::default();
    let mut delta = vec![0.0; n];

    for newton in 0..cfg.outer_newton_max {
        info.residual = it.norm;
        if it.norm <= cfg.outer_newton_tol {
            info.newton_iterations = newton;
            return Ok((Field::new(it.w), info));
        }
        let diag: Vec<f64> = (0..n).map(|i| 1.0 + dt * (neg_lap_diag[i] + it.dphi[i])).collect();
        let dphi = &it.dphi;
        let apply = |x: &[f64], out: &mut [f64]| {
            g.laplacian_into(x, out);
            for i in 0..x.len() {
                out[i] = x[i] - dt * out[i] + dt * dphi[i] * x[i];
            }
        };
        let minus_r: Vec<f64> = it.residual.iter().map(|r| -r).collect();
        delta.iter_mut().for_each(|d| *d = 0.0);
        info.linear_iterations += linalg::pcg(apply, &diag, &minus_r, &mut delta, cfg.linear_tol, cfg.linear_max)?;

        // Backtrack on the residual sup-norm.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = it.w.iter().zip(&delta).map(|(w, d)| w + step * d).collect();
            let cand = evaluate(g, reaction, rhs.values(), dt, trial, &mut lap)?;
            if cand.norm < it.norm || cand.norm <= cfg.outer_newton_tol {
                accepted = Some(cand);
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some(cand) => it = cand,
            None => {
                return Err(Error::NewtonDiverged {
                    iterations: newton + 1,
                    residual: it.norm,
                })
            }
        }
    }
    if it.norm <= cfg.outer_newton_tol {
        info.newton_iterations = cfg.outer_newton_max;
        info.residual = it.norm;
        return Ok((Field::new(it.w), info));
    }
    Err(Error::NewtonDiverged {
        iterations: cfg.outer_newton_max,
        residual: it.norm,
    })
}

/// Advances `state` by one step of size `problem.cfg.dt`.
pub fn step(state: &mut TrajectoryState, problem: &Problem) -> Result<SolveInfo> {
    let inc = problem.increment(state.replicate, state.step_index);
    step_with_increment(state, problem, &inc)
}

pub fn step_with_increment(state: &mut TrajectoryState, problem: &Problem, inc: &NoiseIncrement) -> Result<SolveInfo> {
    let g = &problem.grid;
    let dt = problem.cfg.dt;
    let reaction = &problem.reaction;
    g.check(&state.u)?;

    let noise_term = noise::diffusion_field(&problem.noise, &state.u, inc, reaction.level())?;
    let a = reaction.explicit_coefficient();
    let n = state.u.len();
    let mut rhs = Vec::with_capacity(n);
    for i in 0..n {
        let u = state.u[i];
        let gi = problem.forcing.at(i);
        rhs.push(u + dt * (a * u + gi) + noise_term[i]);
    }

    {
        let rec = &mut state.record;
        let u = state.u.values();
        let (iu, ifp, ig, si) = (
            rec.int_u.values_mut(),
            rec.int_fprime.values_mut(),
            rec.int_g.values_mut(),
            rec.stochastic_integral.values_mut(),
        );
        for i in 0..n {
            iu[i] += dt * u[i];
            ifp[i] += dt * reaction.fprime(u[i])?;
            ig[i] += dt * problem.forcing.at(i);
            si[i] += noise_term[i];
        }
    }
    state.dirichlet_integral += dt * g.grad_norm_sq_raw(state.u.values());
    state.increment_digest = fnv_extend(state.increment_digest, &inc.dw);

    let (w, info) = implicit_solve(g, reaction, &Field::new(rhs), dt, &problem.cfg, Some(&state.u))?;
    state.u = w;
    state.step_index += 1;
    state.t = state.step_index as f64 * dt;
    state.running_sup_norm = state.running_sup_norm.max(state.u.sup_norm());
    Ok(info)
}

/// Per-step track of `int_D G_n(u(t))` and the time integral of `int_D |G_n'(u)|`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeTrack {
    pub order: u32,
    pub series: Vec<f64>,
    pub int_abs_derivative: f64,
}

/// Path functionals entering the a-priori estimates. Suprema run over all
/// output steps; integrals use the left-endpoint rule.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStats {
    pub steps: usize,
    pub sup_h_norm_sq: f64,
    pub sup_grad_norm_sq: f64,
    pub int_grad_sq: f64,
    pub int_fprime_sq: f64,
    pub int_beta_sq: f64,
    pub int_laplacian_sq: f64,
    pub gauges: Vec<GaugeTrack>,
    /// Cell samples with `|u| >= 1`, over all output steps.
    pub excursion_samples: u64,
    pub total_samples: u64,
    pub first_excursion: Option<f64>,
    pub increment_digest: u64,
}

impl PathStats {
    pub fn new(gauge_orders: &[GaugeOrder]) -> Self {
        Self {
            steps: 0,
            sup_h_norm_sq: 0.0,
            sup_grad_norm_sq: 0.0,
            int_grad_sq: 0.0,
            int_fprime_sq: 0.0,
            int_beta_sq: 0.0,
            int_laplacian_sq: 0.0,
            gauges: gauge_orders
                .iter()
                .map(|o| GaugeTrack {
                    order: o.get(),
                    series: Vec::new(),
                    int_abs_derivative: 0.0,
                })
                .collect(),
            excursion_samples: 0,
            total_samples: 0,
            first_excursion: None,
            increment_digest: FNV_OFFSET,
        }
    }

    pub fn excursion_fraction(&self) -> f64 {
        if self.total_samples == 0 {
            0.0
        } else {
            self.excursion_samples as f64 / self.total_samples as f64
        }
    }

    /// Records the state at one output time. `weight` is the quadrature weight
    /// of this sample in the time integrals (`dt`, or 0 at the final time).
    pub fn observe(&mut self, state: &TrajectoryState, problem: &Problem, weight: f64) -> Result<()> {
        let g = &problem.grid;
        let vol = g.cell_volume();
        let u = state.u.values();
        let n = grid::norms(g, &state.u)?;
        self.sup_h_norm_sq = self.sup_h_norm_sq.max(n.h_norm_sq);
        self.sup_grad_norm_sq = self.sup_grad_norm_sq.max(n.grad_norm_sq);

        let mut lap = vec![0.0; u.len()];
        g.laplacian_into(u, &mut lap);
        let (mut fp2, mut b2) = (0.0, 0.0);
        for &r in u {
            let (phi, _) = problem.reaction.implicit(r)?;
            let fp = phi - problem.reaction.explicit_coefficient() * r;
            fp2 += fp * fp;
            b2 += phi * phi;
        }
        self.int_grad_sq += weight * n.grad_norm_sq;
        self.int_fprime_sq += weight * fp2 * vol;
        self.int_beta_sq += weight * b2 * vol;
        self.int_laplacian_sq += weight * linalg::dot(&lap, &lap) * vol;

        let outside = u.iter().filter(|r| r.abs() >= 1.0).count() as u64;
        self.excursion_samples += outside;
        self.total_samples += u.len() as u64;
        if outside > 0 && self.first_excursion.is_none() {
            self.first_excursion = Some(state.t);
        }
        for track in &mut self.gauges {
            let order = GaugeOrder::new(track.order)?;
            let (mut gs, mut dgs) = (0.0, 0.0);
            for &r in u.iter().filter(|r| r.abs() < 1.0) {
                let (gn, dgn) = potential::gauge_eval(order, r)?;
                gs += gn;
                dgs += dgn.abs();
            }
            track.series.push(gs * vol);
            track.int_abs_derivative += weight * dgs * vol;
        }
        self.increment_digest = state.increment_digest;
        self.steps = state.step_index as usize;
        Ok(())
    }
}

/// Options for [`simulate`].
#[derive(Default)]
pub struct SimulateOptions<'a> {
    pub gauge_orders: Vec<GaugeOrder>,
    /// Emit every `stride`-th state (including the initial one).
    pub snapshots: Option<(usize, &'a mut dyn FnMut(&TrajectoryState) -> Result<()>)>,
}

/// Runs `ceil(t_end / dt)` steps from `u0` and returns the final state and
/// the path statistics.
pub fn simulate(
    u0: Field,
    problem: &Problem,
    replicate: u64,
    mut opts: SimulateOptions<'_>,
) -> Result<(TrajectoryState, PathStats)> {
    problem.grid.check(&u0)?;
    if !u0.is_finite() {
        return Err(Error::Domain("initial datum has non-finite values".into()));
    }
    if matches!(problem.reaction, Reaction::Regularized { .. }) && u0.sup_norm() >= 1.0 {
        return Err(Error::Domain(format!(
            "initial datum must satisfy ||u0||_inf < 1, got {}",
            u0.sup_norm()
        )));
    }
    let mut state = TrajectoryState::new(u0, replicate);
    let mut stats = PathStats::new(&opts.gauge_orders);
    let steps = problem.cfg.steps();
    for m in 0..steps {
        if let Some((stride, sink)) = opts.snapshots.as_mut() {
            if m % (*stride).max(1) == 0 {
                sink(&state)?;
            }
        }
        stats.observe(&state, problem, problem.cfg.dt)?;
        step(&mut state, problem).map_err(|e| e.context(format!("replicate {replicate}, step {m}")))?;
    }
    if let Some((stride, sink)) = opts.snapshots.as_mut() {
        if steps % (*stride).max(1) == 0 {
            sink(&state)?;
        }
    }
    stats.observe(&state, problem, 0.0)?;
    Ok((state, stats))
}

/// Absolute defect of the weak formulation tested against `v`:
/// `<u(t) - u0, v> + int <grad u, grad v> + int <F'(u), v> - int <g, v> - <int B dW, v>`.
pub fn weak_residual_check(grid: &Grid, state: &TrajectoryState, v: &Field) -> Result<f64> {
    let rec = &state.record;
    let lap_int = grid::laplacian_neumann(grid, &rec.int_u)?;
    let vol = grid.cell_volume();
    grid.check(v)?;
    let mut s = 0.0;
    for i in 0..v.len() {
        let term = state.u[i] - rec.u0[i] - lap_int[i] + rec.int_fprime[i] - rec.int_g[i] - rec.stochastic_integral[i];
        s += term * v[i];
    }
    Ok((s * vol).abs())
}

/// `Phi_lambda(u) = sum F_lambda(u) h^d`.
pub fn phi_lambda(grid: &Grid, params: &PotentialParams, level: &YosidaLevel, u: &Field) -> Result<f64> {
    grid.check(u)?;
    let mut s = 0.0;
    for &r in u.values() {
        s += potential::regularized_potential_eval(params, level, r)?.0;
    }
    Ok(s * grid.cell_volume())
}

/// `D^2 Phi_lambda(u; h, k) = <F''_lambda(u) h, k>_h`.
pub fn second_variation(
    grid: &Grid,
    params: &PotentialParams,
    level: &YosidaLevel,
    u: &Field,
    h_dir: &Field,
    k_dir: &Field,
) -> Result<f64> {
    grid.check(u)?;
    grid.check(h_dir)?;
    grid.check(k_dir)?;
    let mut s = 0.0;
    for i in 0..u.len() {
        let f2 = potential::regularized_potential_eval(params, level, u[i])?.2;
        s += f2 * h_dir[i] * k_dir[i];
    }
    Ok(s * grid.cell_volume())
}

/// Central-difference check of the first and second Gateaux derivatives of
/// `Phi_lambda` with step `1e-5 (1 + ||u||_inf)`.
pub fn gateaux_check(
    grid: &Grid,
    params: &PotentialParams,
    level: &YosidaLevel,
    u: &Field,
    h_dir: &Field,
    k_dir: &Field,
) -> Result<(f64, f64)> {
    let eps = 1e-5 * (1.0 + u.sup_norm());
    gateaux_check_with_step(grid, params, level, u, h_dir, k_dir, eps)
}

pub fn gateaux_check_with_step(
    grid: &Grid,
    params: &PotentialParams,
    level: &YosidaLevel,
    u: &Field,
    h_dir: &Field,
    k_dir: &Field,
    eps: f64,
) -> Result<(f64, f64)> {
    if h_dir.sup_norm() == 0.0 {
        return Ok((0.0, 0.0));
    }
    let shifted = |dir: &Field, s: f64| {
        let mut w = u.clone();
        w.axpy(s, dir);
        w
    };
    let fp_u = grid::fprime_field(params, level, u)?;
    let d1_exact = grid::inner(grid, &fp_u, h_dir)?;
    let d1_fd = (phi_lambda(grid, params, level, &shifted(h_dir, eps))?
        - phi_lambda(grid, params, level, &shifted(h_dir, -eps))?)
        / (2.0 * eps);

    let fp_plus = grid::fprime_field(params, level, &shifted(k_dir, eps))?;
    let fp_minus = grid::fprime_field(params, level, &shifted(k_dir, -eps))?;
    let d2_fd = (grid::inner(grid, &fp_plus, h_dir)? - grid::inner(grid, &fp_minus, h_dir)?) / (2.0 * eps);
    let d2_exact = second_variation(grid, params, level, u, h_dir, k_dir)?;
    Ok(((d1_fd - d1_exact).abs(), (d2_fd - d2_exact).abs()))
}
