//! Multiplicative noise that shuts off at the pure phases.
//!
//! The diffusion operator acts on mode `k` as `B(u) e_k = h_k(u)` with
//!
//! * sine: `h_k(r) = amp * k^-s * sin(k pi (1 + r) / 2)`
//! * poly_flat: `h_k(r) = amp * k^-s * (1 - r^2)^m * sin(k pi (1 + r) / 2)`
//!
//! so every `h_k` vanishes at `r = +-1` (poly_flat also has `m - 1` vanishing
//! derivatives there). Increments are drawn from a counter-keyed stream: the
//! variates for `(seed, replicate, step)` never depend on which runs consume them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::potential::{self, ResolventPoint, YosidaLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Sine,
    PolyFlat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub modes: usize,
    pub decay_exponent: f64,
    pub amplitude: f64,
    #[serde(default = "default_flatness")]
    pub flatness: u32,
}

fn default_flatness() -> u32 {
    1
}

impl NoiseSpec {
    pub fn sine(modes: usize, decay_exponent: f64, amplitude: f64) -> Result<Self> {
        let spec = Self {
            family: NoiseFamily::Sine,
            modes,
            decay_exponent,
            amplitude,
            flatness: 1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn poly_flat(modes: usize, decay_exponent: f64, amplitude: f64, flatness: u32) -> Result<Self> {
        let spec = Self {
            family: NoiseFamily::PolyFlat,
            modes,
            decay_exponent,
            amplitude,
            flatness,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn off() -> Self {
        Self {
            family: NoiseFamily::Sine,
            modes: 0,
            decay_exponent: 2.0,
            amplitude: 0.0,
            flatness: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.decay_exponent.is_finite() && self.decay_exponent > 1.5) {
            return Err(Error::invalid(
                "noise.decay_exponent",
                format!(
                    "s > 3/2 is needed for a finite sum of squared W^(1,inf) norms, got {}",
                    self.decay_exponent
                ),
            ));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::invalid(
                "noise.amplitude",
                format!("must be >= 0, got {}", self.amplitude),
            ));
        }
        if self.family == NoiseFamily::PolyFlat && self.flatness < 1 {
            return Err(Error::invalid("noise.flatness", "poly_flat needs m >= 1"));
        }
        Ok(())
    }

    /// `amp * k^-s`.
    pub fn coefficient(&self, k: usize) -> f64 {
        self.amplitude * (k as f64).powf(-self.decay_exponent)
    }

    fn flat_exponent(&self) -> i32 {
        match self.family {
            NoiseFamily::Sine => 0,
            NoiseFamily::PolyFlat => self.flatness as i32,
        }
    }
}

/// A state value in `[-1, 1]` stored as `(sign, 1 - |r|)`.
#[derive(Debug, Clone, Copy)]
struct StatePoint {
    sign: f64,
    gap: f64,
}

impl StatePoint {
    fn from_value(r: f64) -> Result<Self> {
        if !(r.is_finite() && r.abs() <= 1.0) {
            return Err(Error::Domain(format!(
                "noise coefficients are defined on [-1, 1], got {r}"
            )));
        }
        Ok(Self {
            sign: if r >= 0.0 { 1.0 } else { -1.0 },
            gap: 1.0 - r.abs(),
        })
    }

    fn from_resolvent(p: &ResolventPoint) -> Self {
        Self {
            sign: if p.sign >= 0.0 { 1.0 } else { -1.0 },
            gap: p.gap(),
        }
    }
}

/// Calls `f(k, h_k)` for every active mode at one state value.
///
/// `sin(k pi (1 + r) / 2)` is evaluated as `(-1)^(k+1) sin(k pi g / 2)` for
/// `r >= 0` and `sin(k pi g / 2)` for `r < 0`, with `g = 1 - |r|`, through the
/// Chebyshev recurrence, so the value at `g = 0` is exactly zero.
fn for_each_mode(spec: &NoiseSpec, p: StatePoint, mut f: impl FnMut(usize, f64)) {
    if spec.modes == 0 {
        return;
    }
    let theta = 0.5 * std::f64::consts::PI * p.gap;
    let two_cos = 2.0 * theta.cos();
    let envelope = match spec.flat_exponent() {
        0 => 1.0,
        m => (p.gap * (2.0 - p.gap)).powi(m),
    };
    let (mut prev, mut cur) = (0.0, theta.sin());
    for k in 1..=spec.modes {
        let parity = if p.sign >= 0.0 && k % 2 == 0 { -1.0 } else { 1.0 };
        f(k, spec.coefficient(k) * envelope * parity * cur);
        let next = two_cos * cur - prev;
        prev = cur;
        cur = next;
    }
}

/// `h_k(r)` for `r` in `[-1, 1]`, `k >= 1`.
pub fn h_value(spec: &NoiseSpec, k: usize, r: f64) -> Result<f64> {
    let p = StatePoint::from_value(r)?;
    if k == 0 {
        return Err(Error::invalid("k", "modes are numbered from 1"));
    }
    let big = NoiseSpec {
        modes: k,
        ..spec.clone()
    };
    let mut out = 0.0;
    for_each_mode(&big, p, |j, h| {
        if j == k {
            out = h;
        }
    });
    Ok(out)
}

/// Upper bound for `sum_k ||h_k||^2_{W^{1,inf}}` with `||h|| = sup|h| + sup|h'|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbBound {
    /// Sum over the active modes.
    pub partial: f64,
    /// Integral bound on the modes beyond the truncation.
    pub tail: f64,
}

impl CbBound {
    pub fn total(&self) -> f64 {
        self.partial + self.tail
    }
}

pub fn cb_bound(spec: &NoiseSpec) -> CbBound {
    if spec.modes == 0 {
        return CbBound {
            partial: 0.0,
            tail: 0.0,
        };
    }
    // ||h_k||_{W^{1,inf}} <= amp k^-s (a + b k). Exact for sine (a = 1, b = pi/2);
    // for poly_flat, sup|h| <= 1 and sup|h'| <= 2m max r(1-r^2)^(m-1) + k pi/2.
    let b = 0.5 * std::f64::consts::PI;
    let a = match spec.family {
        NoiseFamily::Sine => 1.0,
        NoiseFamily::PolyFlat => {
            let m = spec.flatness as f64;
            let rho = if spec.flatness == 1 {
                1.0
            } else {
                (1.0 / (2.0 * m - 1.0)).sqrt() * ((2.0 * m - 2.0) / (2.0 * m - 1.0)).powf(m - 1.0)
            };
            1.0 + 2.0 * m * rho
        }
    };
    let s = spec.decay_exponent;
    let amp2 = spec.amplitude * spec.amplitude;
    let partial = (1..=spec.modes)
        .map(|k| {
            let k = k as f64;
            let n = k.powf(-s) * (a + b * k);
            amp2 * n * n
        })
        .sum();
    // sum_{k > K} f(k) <= int_K^inf f for the decreasing f(x) = amp^2 x^-2s (a + b x)^2.
    let kk = spec.modes as f64;
    let tail = amp2
        * (a * a * kk.powf(1.0 - 2.0 * s) / (2.0 * s - 1.0)
            + 2.0 * a * b * kk.powf(2.0 - 2.0 * s) / (2.0 * s - 2.0)
            + b * b * kk.powf(3.0 - 2.0 * s) / (2.0 * s - 3.0));
    CbBound { partial, tail }
}

/// Key of one block of increments in the counter-based stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseKey {
    pub replicate: u64,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub dw: Vec<f64>,
}

impl NoiseIncrement {
    pub fn zeros(modes: usize) -> Self {
        Self { dw: vec![0.0; modes] }
    }

    pub fn len(&self) -> usize {
        self.dw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dw.is_empty()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic ChaCha8 stream for `(seed, domain, a, b)`.
pub(crate) fn keyed_rng(seed: u64, domain: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = splitmix64(seed ^ splitmix64(domain));
    state = splitmix64(state ^ a);
    state = splitmix64(state ^ b.rotate_left(17));
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

const NOISE_DOMAIN: u64 = 0x6e6f_6973_6521;

/// `K` independent `Normal(0, dt)` variates keyed by `(seed, replicate, step)`.
/// Mode `k` is the `k`-th draw of the keyed stream.
pub fn sample_increments(seed: u64, key: NoiseKey, spec: &NoiseSpec, dt: f64) -> NoiseIncrement {
    if spec.modes == 0 {
        return NoiseIncrement { dw: Vec::new() };
    }
    let mut rng = keyed_rng(seed, NOISE_DOMAIN, key.replicate, key.step);
    let sd = dt.sqrt();
    let dw = (0..spec.modes)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    NoiseIncrement { dw }
}

fn state_points(u: &Field, level: Option<&YosidaLevel>) -> Result<Vec<StatePoint>> {
    u.values()
        .iter()
        .map(|&x| match level {
            Some(l) => potential::resolvent_point(l, x).map(|p| StatePoint::from_resolvent(&p)),
            None => StatePoint::from_value(x),
        })
        .collect()
}

/// `sum_k h_k(v) dW_k` pointwise, with `v = J_lambda(u)` when a level is given.
pub fn diffusion_field(
    spec: &NoiseSpec,
    u: &Field,
    inc: &NoiseIncrement,
    level: Option<&YosidaLevel>,
) -> Result<Field> {
    if inc.len() != spec.modes {
        return Err(Error::SizeMismatch {
            expected: spec.modes,
            actual: inc.len(),
        });
    }
    if spec.modes == 0 {
        return Ok(Field::new(vec![0.0; u.len()]));
    }
    let points = state_points(u, level)?;
    Ok(diffusion_from_points(spec, &points, inc))
}

fn diffusion_from_points(spec: &NoiseSpec, points: &[StatePoint], inc: &NoiseIncrement) -> Field {
    Field::new(
        points
            .iter()
            .map(|&p| {
                let mut s = 0.0;
                for_each_mode(spec, p, |k, h| s += h * inc.dw[k - 1]);
                s
            })
            .collect(),
    )
}

/// `sum_k ||h_k(v)||_H^2`, the squared Hilbert-Schmidt norm of `B(v)`.
pub fn hs_norm_sq(spec: &NoiseSpec, grid: &Grid, u: &Field, level: Option<&YosidaLevel>) -> Result<f64> {
    grid.check(u)?;
    let points = state_points(u, level)?;
    let mut s = 0.0;
    for p in points {
        for_each_mode(spec, p, |_, h| s += h * h);
    }
    Ok(s * grid.cell_volume())
}

/// `||B(x) - B(y)||_HS^2 = sum_k ||h_k(x) - h_k(y)||_H^2`.
pub fn hs_distance_sq(
    spec: &NoiseSpec,
    grid: &Grid,
    x: &Field,
    y: &Field,
    level: Option<&YosidaLevel>,
) -> Result<f64> {
    grid.check(x)?;
    grid.check(y)?;
    let px = state_points(x, level)?;
    let py = state_points(y, level)?;
    let mut hx = vec![0.0; spec.modes];
    let mut s = 0.0;
    for (a, b) in px.into_iter().zip(py) {
        for_each_mode(spec, a, |k, h| hx[k - 1] = h);
        for_each_mode(spec, b, |k, h| {
            let d = hx[k - 1] - h;
            s += d * d;
        });
    }
    Ok(s * grid.cell_volume())
}
