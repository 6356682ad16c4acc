use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mixture::MixtureState;
use crate::rng::{draw_batch, BatchLabel, Phase, StandardNormalBatch};
use crate::targets::{temper, TargetPotential};

use super::config::IntegratorConfig;
use super::moments::{centered_moments, estimate_moments, integrand, pushforward};
use super::step::adaptive_dt;

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealReport {
    pub t_start: f64,
    /// Norm of the stacked mean natural gradients of the entropy part.
    pub entropy_norm: f64,
    /// Same for the potential part.
    pub potential_norm: f64,
    /// `(T_n, Δt_n)` per annealing step.
    pub steps: Vec<(f64, f64)>,
}

/// `T_n = T_start^{(N_α − n)/(N_α − 1)}` for `1 ≤ n ≤ N_α`.
pub fn anneal_temperature(t_start: f64, n: usize, n_alpha: usize) -> f64 {
    if n >= n_alpha {
        return 1.0;
    }
    t_start.powf((n_alpha - n) as f64 / (n_alpha - 1) as f64)
}

/// `max(1, ‖G_Φ‖ / (α ‖G_ent‖))`.
pub fn start_temperature(potential_norm: f64, entropy_norm: f64, alpha: f64) -> Result<f64> {
    if !(entropy_norm > 0.0) {
        return Err(Error::DegenerateEntropyGradient);
    }
    Ok((potential_norm / (alpha * entropy_norm)).max(1.0))
}

fn batches(
    config: &IntegratorConfig,
    phase: Phase,
    n: usize,
    k: usize,
    d: usize,
) -> Result<Vec<StandardNormalBatch>> {
    (0..k)
        .into_par_iter()
        .map(|c| {
            draw_batch(
                config.seed,
                BatchLabel {
                    phase,
                    iteration: n as u64,
                    component: c as u64,
                },
                config.anneal_samples(),
                d,
            )
        })
        .collect()
}

/// Stacked mean natural gradients `(L_k ĝ_k)_k` for the entropy and potential parts of `f`.
fn split_gradient_norms<T: TargetPotential + ?Sized>(
    state: &MixtureState,
    target: &T,
    batches: &[StandardNormalBatch],
) -> Result<(f64, f64)> {
    let density = state.density();
    let parts = (0..state.num_components())
        .into_par_iter()
        .map(|c| {
            let theta = &batches[c].samples;
            let l = &state.sqrt_factors()[c];
            let y = pushforward(l, &state.means()[c], theta);
            let vals = integrand(&density, target, c, &y)?;
            let ent = centered_moments(theta, &vals.log_rho)?;
            let pot = centered_moments(theta, &vals.phi)?;
            let ge = l.as_matrix() * ent.g1;
            let gp = l.as_matrix() * pot.g1;
            Ok((ge.norm_squared(), gp.norm_squared()))
        })
        .collect::<Result<Vec<_>>>()?;
    let ent: f64 = parts.iter().map(|p| p.0).sum();
    let pot: f64 = parts.iter().map(|p| p.1).sum();
    Ok((ent.sqrt(), pot.sqrt()))
}

/// Mean-only tempered warm start; returns the state unchanged when annealing is disabled.
///
/// Covariances and weights are frozen; each step moves the means against
/// `Φ/T_n` with `Δt = min(Δt_max, β / max_k ‖E_k‖₂)`.
pub fn anneal_init<T: TargetPotential + ?Sized>(
    state: &MixtureState,
    target: &T,
    config: &IntegratorConfig,
) -> Result<(MixtureState, Option<AnnealReport>)> {
    let cfg = &config.anneal;
    if !cfg.enabled {
        return Ok((state.clone(), None));
    }
    let (k, d) = (state.num_components(), state.dim());
    let probe = batches(config, Phase::Probe, 0, k, d)?;
    let (entropy_norm, potential_norm) = split_gradient_norms(state, target, &probe)?;
    let t_start = start_temperature(potential_norm, entropy_norm, cfg.alpha)?;
    log::info!(
        "annealing from T = {t_start:.4e} over {} steps",
        cfg.n_alpha
    );
    let mut current = state.clone();
    let mut steps = Vec::with_capacity(cfg.n_alpha);
    for n in 1..=cfg.n_alpha {
        let t = anneal_temperature(t_start, n, cfg.n_alpha);
        let tempered = temper(target, t)?;
        let b = batches(config, Phase::Anneal, n, k, d)?;
        let moments = estimate_moments(&current, &tempered, &b).map_err(|e| e.at_iteration(n))?;
        let dt = adaptive_dt(&moments, 1.0, config);
        let means: Vec<DVector<f64>> = current
            .means()
            .iter()
            .zip(current.sqrt_factors())
            .zip(&moments.components)
            .map(|((m, l), c)| m - l.as_matrix() * &c.g1 * dt)
            .collect();
        if means.iter().any(|m| !m.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite.at_iteration(n));
        }
        current.set_means(means);
        steps.push((t, dt));
    }
    Ok((
        current,
        Some(AnnealReport {
            t_start,
            entropy_norm,
            potential_norm,
            steps,
        }),
    ))
}
