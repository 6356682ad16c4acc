use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mixture::{MixtureDensity, MixtureState};
use crate::rng::StandardNormalBatch;
use crate::spd::{spectral_norm_sym, SqrtFactor, SymMatrix};
use crate::targets::TargetPotential;

/// Centered Monte Carlo moments of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMoments {
    pub f_bar: f64,
    /// `Ê[θ (f − f̄)]`.
    pub g1: DVector<f64>,
    /// `Ê[θ θᵀ (f − f̄)]`.
    pub e: SymMatrix,
    pub e_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates {
    pub components: Vec<ComponentMoments>,
}

impl MomentEstimates {
    pub fn max_e_norm(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.e_norm))
    }

    pub fn f_bars(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.f_bar).collect()
    }
}

/// Points `y_j = L θ_j + m` as the rows of a `J × d` matrix.
pub(crate) fn pushforward(l: &SqrtFactor, m: &DVector<f64>, theta: &DMatrix<f64>) -> DMatrix<f64> {
    let mut y = (l.as_matrix() * theta).transpose();
    for (c, mc) in m.iter().enumerate() {
        y.column_mut(c).add_scalar_mut(*mc);
    }
    y
}

/// Integrand values of one component, split into the entropy and potential parts.
pub(crate) struct Integrand {
    /// `log ρ(y_j) + Φ(y_j)`, arranged so that matching quadratics cancel exactly.
    pub f: Vec<f64>,
    pub log_rho: Vec<f64>,
    pub phi: Vec<f64>,
}

pub(crate) fn integrand<T: TargetPotential + ?Sized>(
    density: &MixtureDensity,
    target: &T,
    component: usize,
    y: &DMatrix<f64>,
) -> Result<Integrand> {
    let parts = density.parts_batch(y);
    let d = y.ncols();
    let phi = (0..y.nrows())
        .into_par_iter()
        .with_min_len(16)
        .map(|j| {
            let row: Vec<f64> = y.row(j).iter().copied().collect();
            target.try_evaluate(&row)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut f = Vec::with_capacity(phi.len());
    let mut log_rho = Vec::with_capacity(phi.len());
    for (j, (p, v)) in parts.iter().zip(&phi).enumerate() {
        let fj = p.lead_const + (v - p.lead_half_quad) + p.tail;
        if !fj.is_finite() {
            return Err(Error::NonFiniteTarget {
                component,
                sample: j,
                point: (0..d).map(|c| y[(j, c)]).collect(),
            });
        }
        f.push(fj);
        log_rho.push(p.value());
    }
    Ok(Integrand { f, log_rho, phi })
}

/// `(f̄, Ê[θ(f − f̄)], Ê[θθᵀ(f − f̄)])` with `1/J` normalization.
///
/// The mean is accumulated as `f₀ + Σ(f_j − f₀)/J` so that a constant
/// integrand yields exactly zero centered weights.
pub(crate) fn centered_moments(theta: &DMatrix<f64>, f: &[f64]) -> Result<ComponentMoments> {
    let j = f.len();
    let inv_j = 1.0 / j as f64;
    let f0 = f[0];
    let f_bar = f0 + f.iter().map(|v| v - f0).sum::<f64>() * inv_j;
    let mut weighted = theta.clone();
    for (c, fv) in f.iter().enumerate() {
        weighted.column_mut(c).scale_mut(fv - f_bar);
    }
    let g1 = weighted.column_sum() * inv_j;
    let e = SymMatrix::from_matrix(&(&weighted * theta.transpose() * inv_j));
    let e_norm = spectral_norm_sym(&e)?;
    Ok(ComponentMoments {
        f_bar,
        g1,
        e,
        e_norm,
    })
}

pub fn estimate_moments<T: TargetPotential + ?Sized>(
    state: &MixtureState,
    target: &T,
    batches: &[StandardNormalBatch],
) -> Result<MomentEstimates> {
    let k = state.num_components();
    if batches.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: batches.len(),
        });
    }
    if target.dim() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            found: target.dim(),
        });
    }
    let density = state.density();
    let components = (0..k)
        .into_par_iter()
        .map(|c| {
            let theta = &batches[c].samples;
            if theta.nrows() != state.dim() {
                return Err(Error::DimensionMismatch {
                    expected: state.dim(),
                    found: theta.nrows(),
                });
            }
            if theta.ncols() < 2 {
                return Err(Error::InvalidConfig(
                    "a batch needs at least 2 samples".into(),
                ));
            }
            let y = pushforward(&state.sqrt_factors()[c], &state.means()[c], theta);
            let vals = integrand(&density, target, c, &y)?;
            centered_moments(theta, &vals.f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentEstimates { components })
}

/// Closed-form moments for a single Gaussian against `½(θ − m⋆)ᵀ C⋆⁻¹ (θ − m⋆)`.
///
/// With `𝐋 = L⋆⁻¹ L` and `v = L⋆⁻¹ (m − m⋆)`: `g1 = 𝐋ᵀ v` and `E = 𝐋ᵀ 𝐋 − I`.
pub fn exact_moments_gaussian(
    state: &MixtureState,
    m_star: &DVector<f64>,
    l_star: &SqrtFactor,
) -> Result<MomentEstimates> {
    if state.num_components() != 1 {
        return Err(Error::UnsupportedTarget(
            "exact expectations need a single-component state".into(),
        ));
    }
    let d = state.dim();
    if m_star.len() != d || l_star.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: m_star.len(),
        });
    }
    let ls = l_star.as_matrix();
    let l = &state.sqrt_factors()[0];
    let white = ls
        .solve_lower_triangular(l.as_matrix())
        .ok_or(Error::SingularFactor { index: 0 })?;
    let v = ls
        .solve_lower_triangular(&(&state.means()[0] - m_star))
        .ok_or(Error::SingularFactor { index: 0 })?;
    let g1 = white.transpose() * &v;
    let gram = white.transpose() * &white;
    let e = SymMatrix::from_matrix(&(&gram - DMatrix::identity(d, d)));
    let e_norm = spectral_norm_sym(&e)?;
    let f_bar = 0.5 * gram.trace() + 0.5 * v.norm_squared()
        - 0.5 * d as f64
        - l.log_det_sqrt()
        - 0.5 * d as f64 * (2.0 * PI).ln();
    Ok(MomentEstimates {
        components: vec![ComponentMoments {
            f_bar,
            g1,
            e,
            e_norm,
        }],
    })
}
