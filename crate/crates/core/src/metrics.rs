//! Grid marginals, total variation, moment tracking and Darcy mode errors.

use std::f64::consts::PI;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::darcy::DarcyPosterior;
use crate::error::{Error, Result};
use crate::mixture::MixtureState;
use crate::targets::TargetPotential;

/// Axis-aligned box sampled at `nx × ny` cell centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> Result<Self> {
        let spec = GridSpec {
            x_min: x.0,
            x_max: x.1,
            y_min: y.0,
            y_max: y.1,
            nx,
            ny,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.nx > 0
            && self.ny > 0
            && [self.x_min, self.x_max, self.y_min, self.y_max]
                .iter()
                .all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.y_max > self.y_min;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("degenerate grid {self:?}")))
        }
    }

    pub fn case_a() -> Self {
        Self::square(10.0, 200)
    }

    pub fn case_b() -> Self {
        Self::square(2.0, 200)
    }

    pub fn case_c() -> Self {
        GridSpec {
            x_min: -7.0,
            x_max: 9.0,
            y_min: -2.0,
            y_max: 82.0,
            nx: 200,
            ny: 200,
        }
    }

    pub fn funnel() -> Self {
        GridSpec {
            x_min: -10.0,
            x_max: 10.0,
            y_min: -20.0,
            y_max: 20.0,
            nx: 200,
            ny: 200,
        }
    }

    fn square(half: f64, n: usize) -> Self {
        GridSpec {
            x_min: -half,
            x_max: half,
            y_min: -half,
            y_max: half,
            nx: n,
            ny: n,
        }
    }

    /// Same box at a different resolution.
    pub fn with_resolution(&self, nx: usize, ny: usize) -> Self {
        GridSpec { nx, ny, ..*self }
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn x_center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn y_center(&self, j: usize) -> f64 {
        self.y_min + (j as f64 + 0.5) * self.dy()
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    fn tabulate(&self, f: impl Fn(f64, f64) -> f64 + Sync) -> Vec<f64> {
        (0..self.ny)
            .into_par_iter()
            .flat_map_iter(|j| {
                let y = self.y_center(j);
                let f = &f;
                (0..self.nx).map(move |i| f(self.x_center(i), y))
            })
            .collect()
    }
}

/// Cell-center density values, row `j` (fixed `y`) stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity2D {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridDensity2D {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.cells() {
            return Err(Error::DimensionMismatch {
                expected: spec.cells(),
                found: values.len(),
            });
        }
        if !values.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::NonFinite);
        }
        Ok(GridDensity2D { spec, values })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.spec.nx + i]
    }

    /// `Σ values · cell_area`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_area()
    }
}

fn check_dims(d: usize, dims: (usize, usize)) -> Result<()> {
    if dims.0 == dims.1 || dims.0 >= d || dims.1 >= d {
        return Err(Error::InvalidConfig(format!(
            "marginal dimensions {dims:?} must be distinct and below {d}"
        )));
    }
    Ok(())
}

/// Exact marginal of the mixture in coordinates `dims`, tabulated on `spec`.
pub fn mixture_marginal_2d(
    state: &MixtureState,
    dims: (usize, usize),
    spec: &GridSpec,
) -> Result<GridDensity2D> {
    check_dims(state.dim(), dims)?;
    spec.validate()?;
    let (a, b) = dims;
    // Per component: mean, inverse 2×2 covariance entries, log normalizer with weight.
    let comps: Vec<[f64; 6]> = (0..state.num_components())
        .map(|k| {
            let c = state.covariance(k).into_matrix();
            let (caa, cab, cbb) = (c[(a, a)], c[(a, b)], c[(b, b)]);
            let det = caa * cbb - cab * cab;
            let m = &state.means()[k];
            [
                m[a],
                m[b],
                cbb / det,
                -cab / det,
                caa / det,
                state.log_weights()[k] - (2.0 * PI).ln() - 0.5 * det.ln(),
            ]
        })
        .collect();
    let values = spec.tabulate(|x, y| {
        let mut terms: Vec<f64> = comps
            .iter()
            .map(|&[mx, my, pxx, pxy, pyy, lc]| {
                let (dx, dy) = (x - mx, y - my);
                let arg = lc - 0.5 * (pxx * dx * dx + 2.0 * pxy * dx * dy + pyy * dy * dy);
                // Below this the term is under 1e-304; skipping it avoids subnormal arithmetic.
                if arg < -700.0 {
                    0.0
                } else {
                    arg.exp()
                }
            })
            .collect();
        terms.sort_by(f64::total_cmp);
        terms.iter().sum()
    });
    GridDensity2D::new(*spec, values)
}

/// Reference `(θ₁, θ₂)` marginal of `target`, renormalized on the grid when its
/// closed form lacks a normalizer.
pub fn reference_density_2d<T: TargetPotential + ?Sized>(
    target: &T,
    spec: &GridSpec,
) -> Result<GridDensity2D> {
    spec.validate()?;
    if target.reference_log_density_2d(0.0, 0.0).is_none() {
        return Err(Error::UnsupportedTarget(
            "no closed-form 2D marginal".into(),
        ));
    }
    let logs = spec.tabulate(|x, y| {
        target
            .reference_log_density_2d(x, y)
            .unwrap_or(f64::NEG_INFINITY)
    });
    if target.reference_is_normalized() {
        return GridDensity2D::new(*spec, logs.iter().map(|v| v.exp()).collect());
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite);
    }
    let un: Vec<f64> = logs
        .iter()
        .map(|v| {
            if v - max < -700.0 {
                0.0
            } else {
                (v - max).exp()
            }
        })
        .collect();
    let z = un.iter().sum::<f64>() * spec.cell_area();
    GridDensity2D::new(*spec, un.iter().map(|v| v / z).collect())
}

/// `½ Σ |p − q| · cell_area`.
pub fn tv_distance(p: &GridDensity2D, q: &GridDensity2D) -> Result<f64> {
    if p.spec != q.spec {
        return Err(Error::GridMismatch);
    }
    let s: f64 = p
        .values
        .iter()
        .zip(&q.values)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(0.5 * s * p.spec.cell_area())
}

/// Mean and variance of coordinate `i` under the mixture.
pub fn scalar_marginal_stats(state: &MixtureState, i: usize) -> Result<(f64, f64)> {
    if i >= state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            found: i,
        });
    }
    let w = state.weights();
    let mean: f64 = w.iter().zip(state.means()).map(|(wk, m)| wk * m[i]).sum();
    let var: f64 = (0..state.num_components())
        .map(|k| {
            let l = state.sqrt_factors()[k].as_matrix();
            let cii = l.row(i).norm_squared();
            let dm = state.means()[k][i] - mean;
            w[k] * (cii + dm * dm)
        })
        .sum();
    Ok((mean, var))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryGroup {
    Truth,
    Mirror,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeError {
    pub group: SymmetryGroup,
    /// `‖log a(m_k) − log a(θ⋆)‖₂ / ‖log a(θ⋆)‖₂` against the group's reference.
    pub rel_error: f64,
    pub misfit: f64,
    pub cov_frobenius: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DarcyErrors {
    pub modes: Vec<ModeError>,
    /// Weight-averaged coefficients per group, with the group's relative field error.
    pub groups: Vec<(SymmetryGroup, f64)>,
}

impl DarcyErrors {
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn l2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Nearest of `references` to `field` in node-wise L2; ties go to the first.
pub fn nearest_field(field: &[f64], references: &[&[f64]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, r) in references.iter().enumerate() {
        let d = l2_diff(field, r);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Per-mode field errors after assigning each mean to the truth or mirror group.
pub fn darcy_errors(
    state: &MixtureState,
    posterior: &DarcyPosterior,
    theta_ref: &[f64],
) -> Result<DarcyErrors> {
    let n = posterior.basis.len();
    if state.dim() != n || theta_ref.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if state.dim() != n {
                state.dim()
            } else {
                theta_ref.len()
            },
        });
    }
    let mirror = posterior.mirror_coeffs(theta_ref);
    let truth_field = posterior.log_permeability_nodes(theta_ref);
    let mirror_field = posterior.log_permeability_nodes(&mirror);
    let refs: [&[f64]; 2] = [&truth_field, &mirror_field];
    let w = state.weights();
    let modes = (0..state.num_components())
        .into_par_iter()
        .map(|k| {
            let m = state.means()[k].as_slice();
            let field = posterior.log_permeability_nodes(m);
            let idx = nearest_field(&field, &refs);
            let group = if idx == 0 {
                SymmetryGroup::Truth
            } else {
                SymmetryGroup::Mirror
            };
            Ok(ModeError {
                group,
                rel_error: l2_diff(&field, refs[idx]) / l2(refs[idx]),
                misfit: posterior.try_evaluate(m)?,
                cov_frobenius: state.covariance(k).as_matrix().norm(),
                weight: w[k],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut groups = Vec::new();
    for (g, reference) in [
        (SymmetryGroup::Truth, &truth_field),
        (SymmetryGroup::Mirror, &mirror_field),
    ] {
        let members: Vec<usize> = (0..modes.len()).filter(|&k| modes[k].group == g).collect();
        if members.is_empty() {
            continue;
        }
        let total: f64 = members.iter().map(|&k| w[k]).sum();
        let mut avg = DVector::zeros(n);
        for &k in &members {
            avg += &state.means()[k] * (w[k] / total);
        }
        let field = posterior.log_permeability_nodes(avg.as_slice());
        groups.push((g, l2_diff(&field, reference) / l2(reference)));
    }
    Ok(DarcyErrors { modes, groups })
}
