use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::mixture::{normalize_log_weights, MixtureState};
use crate::spd::{sym_eig, triangular_root, SqrtFactor, SymMatrix};

use super::config::IntegratorConfig;
use super::moments::MomentEstimates;

/// `min(Δt_max η, β / max_k ‖E_k‖₂)`, or `Δt_max η` when every `E_k` vanishes.
pub fn adaptive_dt(moments: &MomentEstimates, eta: f64, config: &IntegratorConfig) -> f64 {
    let cap = config.dt_max * eta;
    let norm = moments.max_e_norm();
    if norm == 0.0 {
        cap
    } else {
        cap.min(config.beta / norm)
    }
}

/// Square root of `L exp(−E Δt) Lᵀ`.
///
/// The product is never formed: with `E = Q Λ Qᵀ`, the matrix
/// `B = L Q exp(−Λ Δt / 2)` already satisfies `B Bᵀ = C_new`, and its
/// triangular root comes from a QR factorization. This keeps the factor valid
/// even when `C_new` itself would overflow or underflow.
pub fn step_covariance(l: &SqrtFactor, e: &SymMatrix, dt: f64) -> Result<SqrtFactor> {
    if l.dim() != e.dim() {
        return Err(Error::DimensionMismatch {
            expected: l.dim(),
            found: e.dim(),
        });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "step size must be positive, got {dt}"
        )));
    }
    let eig = sym_eig(e)?;
    // Ascending eigenvalues give descending column scales, the order the QR wants.
    let mut b = l.as_matrix() * &eig.vectors;
    for (j, lam) in eig.values.iter().enumerate() {
        b.column_mut(j).scale_mut((-0.5 * lam * dt).exp());
    }
    triangular_root(&b)
}

/// New means and normalized log-weights, all read from the pre-step state.
pub fn step_mean_weights(
    state: &MixtureState,
    moments: &MomentEstimates,
    dt: f64,
) -> Result<(Vec<DVector<f64>>, Vec<f64>)> {
    let k = state.num_components();
    if moments.components.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: moments.components.len(),
        });
    }
    let means = state
        .means()
        .iter()
        .zip(state.sqrt_factors())
        .zip(&moments.components)
        .map(|((m, l), c)| m - l.as_matrix() * &c.g1 * dt)
        .collect();
    let w = state.weights();
    let avg: f64 = w
        .iter()
        .zip(&moments.components)
        .map(|(wi, c)| wi * c.f_bar)
        .sum();
    let raw: Vec<f64> = state
        .log_weights()
        .iter()
        .zip(&moments.components)
        .map(|(lw, c)| lw - dt * (c.f_bar - avg))
        .collect();
    if !raw.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok((means, normalize_log_weights(&raw)))
}
