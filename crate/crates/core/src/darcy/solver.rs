//! Five-point finite differences for `−∇·(a ∇p) = f` on the unit square, `p = 0` on the boundary.

use crate::error::{Error, Result};

use super::kl::HalfGridField;

pub const RESIDUAL_TOL: f64 = 1e-10;

/// Uniform `n × n` mesh of the unit square, spacing `h = 1/n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid2D {
    pub n: usize,
}

impl Grid2D {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "grid needs an even n >= 8, got {n}"
            )));
        }
        Ok(Grid2D { n })
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Number of interior unknowns, `(n − 1)²`.
    pub fn unknowns(&self) -> usize {
        (self.n - 1) * (self.n - 1)
    }

    /// Unknown index of interior node `(i, j)`, `1 ≤ i, j ≤ n − 1`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        (j - 1) * (self.n - 1) + (i - 1)
    }

    /// Interior values of `f` in unknown order.
    pub fn interior_values(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let h = self.h();
        let mut out = Vec::with_capacity(self.unknowns());
        for j in 1..self.n {
            for i in 1..self.n {
                out.push(f(i as f64 * h, j as f64 * h));
            }
        }
        out
    }

    /// Piecewise-constant source: 1000 up to `x₂ = 4/6`, 2000 up to `5/6`, 3000 above.
    ///
    /// The thresholds are compared in integers so nodes on an interface are classified exactly.
    pub fn darcy_source(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(self.unknowns());
        for j in 1..n {
            let v = if 6 * j <= 4 * n {
                1000.0
            } else if 6 * j <= 5 * n {
                2000.0
            } else {
                3000.0
            };
            out.extend(std::iter::repeat_n(v, n - 1));
        }
        out
    }
}

/// Pressure at all `(n+1)²` nodes, boundary zeros included, row-major in `x₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureField {
    pub n: usize,
    pub values: Vec<f64>,
}

impl PressureField {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * (self.n + 1) + i]
    }

    /// `p(1 − x₁, x₂)`.
    pub fn mirrored(&self) -> Self {
        let s = self.n + 1;
        let mut values = vec![0.0; s * s];
        for j in 0..s {
            for i in 0..s {
                values[j * s + i] = self.values[j * s + (s - 1 - i)];
            }
        }
        PressureField { n: self.n, values }
    }
}

/// Symmetric banded matrix, lower band stored row by row.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    size: usize,
    band: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    fn zeros(size: usize, band: usize) -> Self {
        BandedSpd {
            size,
            band,
            data: vec![0.0; size * (band + 1)],
        }
    }

    #[inline]
    fn pos(&self, i: usize, k: usize) -> usize {
        i * (self.band + 1) + self.band - (i - k)
    }

    /// Entry `(i, k)` for `k ≤ i`.
    pub fn get(&self, i: usize, k: usize) -> f64 {
        if i - k > self.band {
            0.0
        } else {
            self.data[self.pos(i, k)]
        }
    }

    fn set(&mut self, i: usize, k: usize, v: f64) {
        let p = self.pos(i, k);
        self.data[p] = v;
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// In-place banded Cholesky; the lower factor replaces the matrix.
    pub fn factor(&self) -> Result<BandedCholesky> {
        let (n, b) = (self.size, self.band);
        let w = b + 1;
        let mut l = self.data.clone();
        for i in 0..n {
            let first = i.saturating_sub(b);
            for k in first..=i {
                let lo = first.max(k.saturating_sub(b));
                // Row i and row k are contiguous over columns lo..k.
                let ri = i * w + b - (i - lo);
                let rk = k * w + b - (k - lo);
                let len = k - lo;
                let mut s = l[i * w + b - (i - k)];
                for t in 0..len {
                    s -= l[ri + t] * l[rk + t];
                }
                if k == i {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite { index: i, pivot: s });
                    }
                    l[i * w + b] = s.sqrt();
                } else {
                    l[i * w + b - (i - k)] = s / l[k * w + b];
                }
            }
        }
        Ok(BandedCholesky {
            size: n,
            band: b,
            data: l,
        })
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let (n, b) = (self.size, self.band);
        let mut y = vec![0.0; n];
        for i in 0..n {
            let first = i.saturating_sub(b);
            for k in first..i {
                let a = self.get(i, k);
                y[i] += a * x[k];
                y[k] += a * x[i];
            }
            y[i] += self.get(i, i) * x[i];
        }
        y
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    size: usize,
    band: usize,
    data: Vec<f64>,
}

impl BandedCholesky {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, b) = (self.size, self.band);
        let w = b + 1;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let first = i.saturating_sub(b);
            let row = i * w + b - (i - first);
            let mut s = y[i];
            for (t, k) in (first..i).enumerate() {
                s -= self.data[row + t] * y[k];
            }
            y[i] = s / self.data[i * w + b];
        }
        for i in (0..n).rev() {
            let xi = y[i] / self.data[i * w + b];
            y[i] = xi;
            let first = i.saturating_sub(b);
            let row = i * w + b - (i - first);
            for (t, k) in (first..i).enumerate() {
                y[k] -= self.data[row + t] * xi;
            }
        }
        y
    }
}

/// Assembles `A p = h² f` with face coefficients `a` taken at edge midpoints.
pub fn assemble(log_a: &HalfGridField, grid: Grid2D) -> Result<BandedSpd> {
    if log_a.n != grid.n {
        return Err(Error::GridMismatch);
    }
    let n = grid.n;
    let a = log_a.map(f64::exp);
    if !a.values.iter().all(|v| v.is_finite() && *v > 0.0) {
        return Err(Error::NonFinite);
    }
    let mut m = BandedSpd::zeros(grid.unknowns(), n - 1);
    for j in 1..n {
        for i in 1..n {
            let (hi, hj) = (2 * i, 2 * j);
            let east = a.at(hi + 1, hj);
            let west = a.at(hi - 1, hj);
            let north = a.at(hi, hj + 1);
            let south = a.at(hi, hj - 1);
            let row = grid.index(i, j);
            m.set(row, row, east + west + north + south);
            if i > 1 {
                m.set(row, grid.index(i - 1, j), -west);
            }
            if j > 1 {
                m.set(row, grid.index(i, j - 1), -south);
            }
        }
    }
    Ok(m)
}

/// Solves the Darcy system; `source` holds `f` at the interior nodes in unknown order.
pub fn solve_darcy(log_a: &HalfGridField, source: &[f64], grid: Grid2D) -> Result<PressureField> {
    if source.len() != grid.unknowns() {
        return Err(Error::DimensionMismatch {
            expected: grid.unknowns(),
            found: source.len(),
        });
    }
    let a = assemble(log_a, grid)?;
    let h2 = grid.h() * grid.h();
    let rhs: Vec<f64> = source.iter().map(|f| h2 * f).collect();
    let chol = a.factor()?;
    let mut p = chol.solve(&rhs);
    let rhs_norm = norm(&rhs);
    if rhs_norm > 0.0 {
        let mut residual = relative_residual(&a, &p, &rhs, rhs_norm);
        if residual > RESIDUAL_TOL {
            let r: Vec<f64> = a
                .mul_vec(&p)
                .iter()
                .zip(&rhs)
                .map(|(ap, b)| b - ap)
                .collect();
            let dp = chol.solve(&r);
            for (pi, d) in p.iter_mut().zip(&dp) {
                *pi += d;
            }
            residual = relative_residual(&a, &p, &rhs, rhs_norm);
        }
        if !(residual <= RESIDUAL_TOL) {
            return Err(Error::SolverDivergence { residual });
        }
    }
    let s = grid.n + 1;
    let mut values = vec![0.0; s * s];
    for j in 1..grid.n {
        for i in 1..grid.n {
            values[j * s + i] = p[grid.index(i, j)];
        }
    }
    Ok(PressureField { n: grid.n, values })
}

fn relative_residual(a: &BandedSpd, x: &[f64], b: &[f64], b_norm: f64) -> f64 {
    let ax = a.mul_vec(x);
    let r: f64 = ax
        .iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt();
    r / b_norm
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
