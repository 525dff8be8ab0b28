//! Scalar machinery for the logarithmic double-well potential.
//!
//! The logarithmic potential splits as `F(r) = beta_hat(r) - c r^2 + K` where
//! `beta(r) = ln((1+r)/(1-r))` is the monotone singular part. For `lambda > 0`
//! the singular part is replaced by its Yosida approximation `beta_lambda`,
//! which is globally Lipschitz on the real line.
//!
//! Points close to `+-1` are tracked through the logarithm of their distance to
//! the boundary, so the resolvent stays strictly inside `(-1, 1)` even when
//! `1 - |J(x)|` falls below `f64` resolution.

use crate::error::{Error, Result};

/// `beta(r) = ln((1 + r) / (1 - r))`, the monotone part of `F'`.
pub fn beta(r: f64) -> Result<f64> {
    check_open_interval(r)?;
    Ok(2.0 * r.atanh())
}

/// Returns `(beta, beta', beta_hat)` at `r`, with `beta_hat(0) = 0`.
pub fn beta_family_eval(r: f64) -> Result<(f64, f64, f64)> {
    check_open_interval(r)?;
    let b = 2.0 * r.atanh();
    let bp = 2.0 / ((1.0 - r) * (1.0 + r));
    Ok((b, bp, beta_hat_unchecked(r)))
}

fn beta_hat_unchecked(r: f64) -> f64 {
    (1.0 + r) * r.ln_1p() + (1.0 - r) * (-r).ln_1p()
}

fn check_open_interval(r: f64) -> Result<()> {
    if r.is_finite() && r.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("|r| < 1 required, got r = {r}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialParams {
    /// `F(r) = (1+r)ln(1+r) + (1-r)ln(1-r) - c r^2 + K` on `(-1, 1)`.
    Logarithmic { c: f64, k: f64 },
    /// `F(r) = (1 - r^2)^2 / 4` on the real line.
    Polynomial,
}

impl PotentialParams {
    /// Logarithmic potential with the smallest offset `K` keeping `F >= 0`.
    pub fn logarithmic(c: f64) -> Result<Self> {
        let k = minimal_offset(c)?;
        Ok(PotentialParams::Logarithmic { c, k })
    }

    /// Logarithmic potential with an explicit offset. Rejects offsets that
    /// leave `F` negative somewhere in `(-1, 1)`.
    pub fn logarithmic_with_offset(c: f64, k: f64) -> Result<Self> {
        let k_min = minimal_offset(c)?;
        if !k.is_finite() || k < k_min - 1e-12 {
            return Err(Error::invalid(
                "potential.k",
                format!("K = {k} leaves F negative; the minimum admissible offset for c = {c} is {k_min}"),
            ));
        }
        Ok(PotentialParams::Logarithmic { c, k })
    }

    pub fn polynomial() -> Self {
        PotentialParams::Polynomial
    }

    /// Coefficient of the concave quadratic part, `c` in `-c r^2`.
    pub fn concavity(&self) -> f64 {
        match *self {
            PotentialParams::Logarithmic { c, .. } => c,
            PotentialParams::Polynomial => 0.5,
        }
    }

    /// `F(0)`.
    pub fn offset(&self) -> f64 {
        match *self {
            PotentialParams::Logarithmic { k, .. } => k,
            PotentialParams::Polynomial => 0.25,
        }
    }
}

fn validate_c(c: f64) -> Result<()> {
    if c.is_finite() && c > 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            "potential.c",
            format!("the logarithmic double well needs c > 1, got c = {c}"),
        ))
    }
}

/// Positive minimizer of `F_log`, the root of `beta(r) = 2 c r` in `(0, 1)`.
pub fn log_minimizer(c: f64) -> Result<f64> {
    validate_c(c)?;
    let g = |r: f64| 2.0 * r.atanh() - 2.0 * c * r;
    let (mut lo, mut hi) = (1e-9_f64, 1.0 - f64::EPSILON);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `-min F_log`, the smallest `K` with `F_log + K >= 0` on `(-1, 1)`.
pub fn minimal_offset(c: f64) -> Result<f64> {
    let r = log_minimizer(c)?;
    Ok(-(beta_hat_unchecked(r) - c * r * r))
}

/// Returns `(F, F', F'')` at `r`.
pub fn potential_eval(params: &PotentialParams, r: f64) -> Result<(f64, f64, f64)> {
    match *params {
        PotentialParams::Logarithmic { c, k } => {
            let (b, bp, bh) = beta_family_eval(r)?;
            Ok((bh - c * r * r + k, b - 2.0 * c * r, bp - 2.0 * c))
        }
        PotentialParams::Polynomial => {
            if !r.is_finite() {
                return Err(Error::Domain(format!("non-finite argument {r}")));
            }
            let s = 1.0 - r * r;
            Ok((0.25 * s * s, r * r * r - r, 3.0 * r * r - 1.0))
        }
    }
}

/// Regularization level for the Yosida approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YosidaLevel {
    pub lambda: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl YosidaLevel {
    pub fn new(lambda: f64) -> Result<Self> {
        Self::with_tolerance(lambda, 1e-12, 200)
    }

    pub fn with_tolerance(lambda: f64, newton_tol: f64, newton_max_iter: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::invalid("lambda", format!("must lie in (0, 1), got {lambda}")));
        }
        if !(newton_tol > 0.0) {
            return Err(Error::invalid("newton_tol", format!("must be positive, got {newton_tol}")));
        }
        if newton_max_iter == 0 {
            return Err(Error::invalid("newton_max_iter", "must be at least 1"));
        }
        Ok(Self {
            lambda,
            newton_tol,
            newton_max_iter,
        })
    }
}

/// The resolvent `J_lambda(x)` in boundary-aware form.
///
/// `value = sign * (1 - gap)` with `gap = exp(log_gap)` in `(0, 1]`. The
/// rounded `value` may equal `+-1` when `gap < 2^-53`; `log_gap` stays finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventPoint {
    pub value: f64,
    pub sign: f64,
    pub log_gap: f64,
}

impl ResolventPoint {
    pub fn origin() -> Self {
        Self {
            value: 0.0,
            sign: 0.0,
            log_gap: 0.0,
        }
    }

    pub fn gap(&self) -> f64 {
        self.log_gap.exp()
    }

    /// `1 - value^2`, computed from the gap.
    pub fn one_minus_sq(&self) -> f64 {
        let g = self.gap();
        g * (2.0 - g)
    }

    pub fn is_interior(&self) -> bool {
        self.log_gap.is_finite()
    }

    /// `beta` at the point, evaluated without forming `1 - |value|`.
    pub fn beta(&self) -> f64 {
        let r_abs = -self.log_gap.exp_m1();
        self.sign * (r_abs.ln_1p() - self.log_gap)
    }
}

/// Solves `r + lambda * beta(r) = x` for `r` in `(-1, 1)`.
pub fn resolvent(level: &YosidaLevel, x: f64) -> Result<f64> {
    resolvent_point(level, x).map(|p| p.value)
}

/// Safeguarded Newton in the variable `t = -ln(1 - |r|)`, with bisection on the
/// bracket `[0, |x| / lambda]` whenever the Newton iterate leaves it.
pub fn resolvent_point(level: &YosidaLevel, x: f64) -> Result<ResolventPoint> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("resolvent of non-finite value {x}")));
    }
    if x == 0.0 {
        return Ok(ResolventPoint::origin());
    }
    let lambda = level.lambda;
    let a = x.abs();

    // Residual of the scalar equation in x-units and its t-derivative.
    let eval = |t: f64| {
        let g = (-t).exp();
        let r = -(-t).exp_m1();
        let f = r + lambda * (r.ln_1p() + t) - a;
        let df = g + lambda * (1.0 + g / (1.0 + r));
        (f, df)
    };

    let mut lo = 0.0_f64;
    let mut hi = a / lambda + 1.0;
    let guess_small = {
        let r = (a / (1.0 + 2.0 * lambda)).min(0.999_999);
        -(-r).ln_1p()
    };
    let guess_large = ((a - 1.0) / lambda - std::f64::consts::LN_2).max(0.0);
    let mut t = if eval(guess_small).0.abs() <= eval(guess_large).0.abs() {
        guess_small
    } else {
        guess_large
    };
    t = t.clamp(lo, hi);

    for _ in 0..level.newton_max_iter {
        let (f, df) = eval(t);
        if f.abs() <= level.newton_tol {
            return Ok(point_from_t(x, t));
        }
        if f < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - f / df;
        t = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * hi.max(1.0) {
            let (f, _) = eval(t);
            let floor = 64.0 * f64::EPSILON * (a + lambda * t);
            if f.abs() <= level.newton_tol.max(floor) {
                return Ok(point_from_t(x, t));
            }
            break;
        }
    }
    let (f, _) = eval(t);
    if f.abs() <= level.newton_tol {
        return Ok(point_from_t(x, t));
    }
    Err(Error::ResolventDiverged { x, lambda })
}

fn point_from_t(x: f64, t: f64) -> ResolventPoint {
    let sign = x.signum();
    ResolventPoint {
        value: sign * -(-t).exp_m1(),
        sign,
        log_gap: -t,
    }
}

/// Returns `(beta_lambda, beta_lambda', beta_hat_lambda)` at `x`.
///
/// `beta_lambda = beta(J(x))`, `beta_lambda' = beta'(J)/(1 + lambda beta'(J))`
/// and `beta_hat_lambda = beta_hat(J) + lambda/2 beta_lambda^2` (Moreau envelope).
pub fn yosida_eval(level: &YosidaLevel, x: f64) -> Result<(f64, f64, f64)> {
    let p = resolvent_point(level, x)?;
    Ok(yosida_at(level, &p))
}

pub(crate) fn yosida_at(level: &YosidaLevel, p: &ResolventPoint) -> (f64, f64, f64) {
    let lambda = level.lambda;
    let g = p.gap();
    let b = p.beta();
    let db = 2.0 / (g * (2.0 - g) + 2.0 * lambda);
    // beta_hat(J) = (2 - g) ln(2 - g) + g ln g
    let bh_j = (2.0 - g) * (1.0 - g).ln_1p() + g * p.log_gap;
    (b, db, bh_j + 0.5 * lambda * b * b)
}

/// Returns `(F_lambda, F_lambda', F_lambda'')` at `r` (any real).
pub fn regularized_potential_eval(
    params: &PotentialParams,
    level: &YosidaLevel,
    r: f64,
) -> Result<(f64, f64, f64)> {
    let PotentialParams::Logarithmic { c, k } = *params else {
        return Err(Error::Domain(
            "only the logarithmic potential is regularized".into(),
        ));
    };
    let (b, db, bh) = yosida_eval(level, r)?;
    Ok((k + bh - c * r * r, b - 2.0 * c * r, db - 2.0 * c))
}

/// Order `n >= 2` of the singularity gauge `G_n(r) = (1 - r^2)^(1 - n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaugeOrder(u32);

impl GaugeOrder {
    pub fn new(n: u32) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("gauge order", format!("n >= 2 required, got {n}")));
        }
        Ok(Self(n))
    }

    pub fn get(&self) -> u32 {
        self.0
    }
}

/// Returns `(G_n(r), G_n'(r))`.
pub fn gauge_eval(order: GaugeOrder, r: f64) -> Result<(f64, f64)> {
    check_open_interval(r)?;
    let n = order.0 as i32;
    let s = (1.0 - r) * (1.0 + r);
    let g = s.powi(1 - n);
    let dg = 2.0 * (n - 1) as f64 * r * s.powi(-n);
    Ok((g, dg))
}
