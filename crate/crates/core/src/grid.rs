//! Cell-centered rectangular meshes with homogeneous Neumann boundaries.
//!
//! Cell `(i, j)` has center `((i + 1/2) hx, (j + 1/2) hy)` and is stored at
//! index `j * nx + i`. Ghost cells mirror the adjacent interior value, so the
//! boundary faces carry zero flux and the discrete Laplacian satisfies
//! summation by parts exactly.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::linalg;
use crate::potential::{self, PotentialParams, YosidaLevel};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    extent: [f64; 2],
    cells: [usize; 2],
}

impl Grid {
    pub fn line(length: f64, cells: usize) -> Result<Self> {
        Self::new(&[length], &[cells])
    }

    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::new(&[lx, ly], &[nx, ny])
    }

    pub fn new(extent: &[f64], cells: &[usize]) -> Result<Self> {
        let dim = extent.len();
        if !(dim == 1 || dim == 2) {
            return Err(Error::invalid("grid.extent", format!("dimension must be 1 or 2, got {dim}")));
        }
        if cells.len() != dim {
            return Err(Error::invalid(
                "grid.cells",
                format!("expected {dim} cell counts, got {}", cells.len()),
            ));
        }
        for (axis, (&l, &n)) in extent.iter().zip(cells).enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::invalid(format!("grid.extent[{axis}]"), format!("must be positive, got {l}")));
            }
            if n < 2 {
                return Err(Error::invalid(format!("grid.cells[{axis}]"), format!("need at least 2 cells, got {n}")));
            }
        }
        let mut e = [1.0, 1.0];
        let mut c = [1, 1];
        e[..dim].copy_from_slice(extent);
        c[..dim].copy_from_slice(cells);
        Ok(Self { dim, extent: e, cells: c })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent[..self.dim]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn spacing(&self) -> Vec<f64> {
        (0..self.dim).map(|a| self.extent[a] / self.cells[a] as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `h^d`, the quadrature weight of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    /// `|D|`.
    pub fn measure(&self) -> f64 {
        self.extent().iter().product()
    }

    /// Cell centers, one coordinate vector per cell.
    pub fn centers(&self) -> Vec<Vec<f64>> {
        let h = self.spacing();
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.cells[1] {
            for i in 0..self.cells[0] {
                let mut x = vec![(i as f64 + 0.5) * h[0]];
                if self.dim == 2 {
                    x.push((j as f64 + 0.5) * h[1]);
                }
                out.push(x);
            }
        }
        out
    }

    /// Samples `f` at the cell centers.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Field {
        Field::new(self.centers().iter().map(|x| f(x)).collect())
    }

    pub fn constant(&self, value: f64) -> Field {
        Field::new(vec![value; self.len()])
    }

    pub fn zeros(&self) -> Field {
        self.constant(0.0)
    }

    pub(crate) fn check(&self, u: &Field) -> Result<()> {
        if u.len() != self.len() {
            return Err(Error::SizeMismatch {
                expected: self.len(),
                actual: u.len(),
            });
        }
        Ok(())
    }

    /// `out = Delta_h u` without allocation. Sizes are not checked.
    pub(crate) fn laplacian_into(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let (nx, ny) = (self.cells[0], self.cells[1]);
        let h = self.spacing();
        let wx = 1.0 / (h[0] * h[0]);
        for j in 0..ny {
            let row = j * nx;
            for i in 0..nx - 1 {
                let flux = (u[row + i + 1] - u[row + i]) * wx;
                out[row + i] += flux;
                out[row + i + 1] -= flux;
            }
        }
        if self.dim == 2 {
            let wy = 1.0 / (h[1] * h[1]);
            for j in 0..ny - 1 {
                for i in 0..nx {
                    let (a, b) = (j * nx + i, (j + 1) * nx + i);
                    let flux = (u[b] - u[a]) * wy;
                    out[a] += flux;
                    out[b] -= flux;
                }
            }
        }
    }

    /// Diagonal of `-Delta_h` (number of interior neighbours over `h^2`).
    pub(crate) fn neg_laplacian_diag(&self) -> Vec<f64> {
        let (nx, ny) = (self.cells[0], self.cells[1]);
        let h = self.spacing();
        let mut d = vec![0.0; self.len()];
        for j in 0..ny {
            for i in 0..nx {
                let mut v = 0.0;
                let wx = 1.0 / (h[0] * h[0]);
                if i > 0 {
                    v += wx;
                }
                if i + 1 < nx {
                    v += wx;
                }
                if self.dim == 2 {
                    let wy = 1.0 / (h[1] * h[1]);
                    if j > 0 {
                        v += wy;
                    }
                    if j + 1 < ny {
                        v += wy;
                    }
                }
                d[j * nx + i] = v;
            }
        }
        d
    }

    pub(crate) fn grad_norm_sq_raw(&self, u: &[f64]) -> f64 {
        let (nx, ny) = (self.cells[0], self.cells[1]);
        let h = self.spacing();
        let vol = self.cell_volume();
        let mut s = 0.0;
        for j in 0..ny {
            let row = j * nx;
            for i in 0..nx - 1 {
                let d = (u[row + i + 1] - u[row + i]) / h[0];
                s += d * d;
            }
        }
        if self.dim == 2 {
            for j in 0..ny - 1 {
                for i in 0..nx {
                    let d = (u[(j + 1) * nx + i] - u[j * nx + i]) / h[1];
                    s += d * d;
                }
            }
        }
        s * vol
    }
}

/// Nodal values of a scalar field, one per cell, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::new(self.values.iter().map(|&v| f(v)).collect())
    }

    /// `self - other`.
    pub fn sub(&self, other: &Field) -> Field {
        Field::new(self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect())
    }

    /// `self + other`.
    pub fn add(&self, other: &Field) -> Field {
        Field::new(self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &Field) {
        for (v, xi) in self.values.iter_mut().zip(&x.values) {
            *v += a * xi;
        }
    }
}

impl std::ops::Index<usize> for Field {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// `Delta_h u` with mirror ghosts.
pub fn laplacian_neumann(g: &Grid, u: &Field) -> Result<Field> {
    g.check(u)?;
    let mut out = vec![0.0; u.len()];
    g.laplacian_into(u.values(), &mut out);
    Ok(Field::new(out))
}

/// `<u, v>_h = sum u v h^d`.
pub fn inner(g: &Grid, u: &Field, v: &Field) -> Result<f64> {
    g.check(u)?;
    g.check(v)?;
    Ok(linalg::dot(u.values(), v.values()) * g.cell_volume())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub h_norm_sq: f64,
    pub grad_norm_sq: f64,
    pub sup_norm: f64,
}

impl Norms {
    /// `||u||_V^2 = ||u||_H^2 + ||grad u||_H^2`.
    pub fn v_norm_sq(&self) -> f64 {
        self.h_norm_sq + self.grad_norm_sq
    }
}

pub fn norms(g: &Grid, u: &Field) -> Result<Norms> {
    g.check(u)?;
    let h_norm_sq = linalg::dot(u.values(), u.values()) * g.cell_volume();
    Ok(Norms {
        h_norm_sq,
        grad_norm_sq: g.grad_norm_sq_raw(u.values()),
        sup_norm: u.sup_norm(),
    })
}

/// Ginzburg-Landau energy `1/2 ||grad u||^2 + sum F(u) h^d`, with `F_lambda`
/// in place of `F` when a level is given.
pub fn energy(g: &Grid, params: &PotentialParams, level: Option<&YosidaLevel>, u: &Field) -> Result<f64> {
    g.check(u)?;
    let mut bulk = 0.0;
    for &r in u.values() {
        bulk += match (params, level) {
            (PotentialParams::Logarithmic { .. }, Some(l)) => potential::regularized_potential_eval(params, l, r)?.0,
            _ => potential::potential_eval(params, r)?.0,
        };
    }
    Ok(0.5 * g.grad_norm_sq_raw(u.values()) + bulk * g.cell_volume())
}

/// `F'_lambda` (logarithmic) or `F'` (polynomial) applied pointwise.
pub fn fprime_field(params: &PotentialParams, level: &YosidaLevel, u: &Field) -> Result<Field> {
    let mut out = Vec::with_capacity(u.len());
    for &r in u.values() {
        out.push(match params {
            PotentialParams::Logarithmic { .. } => potential::regularized_potential_eval(params, level, r)?.1,
            PotentialParams::Polynomial => potential::potential_eval(params, r)?.1,
        });
    }
    Ok(Field::new(out))
}

/// Discrete drift `-Delta_h u + F'_lambda(u) - g`.
pub fn drift_apply(
    g: &Grid,
    params: &PotentialParams,
    level: &YosidaLevel,
    u: &Field,
    g_force: &Field,
) -> Result<Field> {
    g.check(u)?;
    g.check(g_force)?;
    let lap = laplacian_neumann(g, u)?;
    let fp = fprime_field(params, level, u)?;
    Ok(Field::new(
        lap.values()
            .iter()
            .zip(fp.values())
            .zip(g_force.values())
            .map(|((l, f), gf)| -l + f - gf)
            .collect(),
    ))
}

/// `||f||_{V*}^2 = <f, (I - Delta_h)^{-1} f>_h`.
pub fn v_star_norm_sq(g: &Grid, f: &Field) -> Result<f64> {
    g.check(f)?;
    let diag: Vec<f64> = g.neg_laplacian_diag().iter().map(|d| 1.0 + d).collect();
    let apply = |x: &[f64], out: &mut [f64]| {
        g.laplacian_into(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi - *o;
        }
    };
    let mut z = vec![0.0; f.len()];
    linalg::pcg(apply, &diag, f.values(), &mut z, 1e-13, 10 * f.len() + 100)?;
    Ok(linalg::dot(f.values(), &z) * g.cell_volume())
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"ACF1";

/// Writes the 32-byte `ACF1` header followed by little-endian `f64` values.
///
/// Header layout: magic, `dim: u32`, `nx: u32`, `ny: u32`, `hx: f64`, `hy: f64`.
/// One-dimensional grids store `ny = 1` and `hy = 0`.
pub fn write_snapshot(w: &mut impl Write, g: &Grid, u: &Field) -> Result<()> {
    g.check(u)?;
    let h = g.spacing();
    let mut buf = Vec::with_capacity(32 + 8 * u.len());
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&(g.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(g.cells[0] as u32).to_le_bytes());
    buf.extend_from_slice(&(g.cells[1] as u32).to_le_bytes());
    buf.extend_from_slice(&h[0].to_le_bytes());
    buf.extend_from_slice(&(if g.dim == 2 { h[1] } else { 0.0 }).to_le_bytes());
    for v in u.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::io("<snapshot>", e))
}

pub fn read_snapshot(r: &mut impl Read) -> Result<(Grid, Field)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io("<snapshot>", e))?;
    if bytes.len() < 32 || &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot("missing ACF1 header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let dim = u32_at(4);
    let (nx, ny) = (u32_at(8), u32_at(12));
    let (hx, hy) = (f64_at(16), f64_at(24));
    let grid = match dim {
        1 if ny == 1 => Grid::line(hx * nx as f64, nx)?,
        2 => Grid::rectangle(hx * nx as f64, hy * ny as f64, nx, ny)?,
        _ => return Err(Error::Snapshot(format!("bad dimension {dim} / ny {ny}"))),
    };
    let n = grid.len();
    if bytes.len() != 32 + 8 * n {
        return Err(Error::Snapshot(format!(
            "expected {} payload bytes, found {}",
            8 * n,
            bytes.len() - 32
        )));
    }
    let values = (0..n).map(|i| f64_at(32 + 8 * i)).collect();
    Ok((grid, Field::new(values)))
}
