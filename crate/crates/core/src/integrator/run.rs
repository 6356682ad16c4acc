use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mixture::MixtureState;
use crate::rng::{draw_batch, BatchLabel, StandardNormalBatch};
use crate::targets::TargetPotential;

use super::anneal::{anneal_init, AnnealReport};
use super::config::IntegratorConfig;
use super::moments::{estimate_moments, exact_moments_gaussian, MomentEstimates};
use super::schedule::scheduler_eta;
use super::step::{adaptive_dt, step_covariance, step_mean_weights};

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub n: usize,
    pub dt: f64,
    pub eta: f64,
    pub max_e_norm: f64,
    pub weights: Vec<f64>,
    pub f_bars: Vec<f64>,
    /// Seconds spent in the step. Not part of the deterministic record.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub diagnostics: Vec<StepDiagnostics>,
    /// `(iteration, state)`; iteration 0 is the state the main loop started from.
    pub snapshots: Vec<(usize, MixtureState)>,
    pub anneal: Option<AnnealReport>,
}

pub fn draw_main_batches(
    config: &IntegratorConfig,
    n: usize,
    k: usize,
    d: usize,
) -> Result<Vec<StandardNormalBatch>> {
    (0..k)
        .into_par_iter()
        .map(|c| draw_batch(config.seed, BatchLabel::main(n, c), config.j, d))
        .collect()
}

/// One step from `state` given already computed moments and `η`.
pub fn advance(
    state: &MixtureState,
    moments: &MomentEstimates,
    eta: f64,
    config: &IntegratorConfig,
) -> Result<(MixtureState, f64)> {
    let dt = adaptive_dt(moments, eta, config);
    let factors = state
        .sqrt_factors()
        .par_iter()
        .zip(moments.components.par_iter())
        .map(|(l, c)| step_covariance(l, &c.e, dt))
        .collect::<Result<Vec<_>>>()?;
    let (means, log_weights) = step_mean_weights(state, moments, dt)?;
    Ok((MixtureState::new(means, factors, log_weights)?, dt))
}

fn main_moments<T: TargetPotential + ?Sized>(
    state: &MixtureState,
    target: &T,
    config: &IntegratorConfig,
    n: usize,
) -> Result<MomentEstimates> {
    if config.exact_expectations {
        let (m, l) = target.as_gaussian().ok_or_else(|| {
            Error::UnsupportedTarget("exact expectations need a Gaussian target".into())
        })?;
        exact_moments_gaussian(state, m, l)
    } else {
        let batches = draw_main_batches(config, n, state.num_components(), state.dim())?;
        estimate_moments(state, target, &batches)
    }
}

pub fn run<T: TargetPotential + ?Sized>(
    config: &IntegratorConfig,
    target: &T,
    initial: MixtureState,
) -> Result<(MixtureState, Trajectory)> {
    run_with_observer(config, target, initial, &mut |_, _, _| Ok(()))
}

/// Like [`run`], calling `observer(n, state, diagnostics)` after every step.
pub fn run_with_observer<T: TargetPotential + ?Sized>(
    config: &IntegratorConfig,
    target: &T,
    initial: MixtureState,
    observer: &mut dyn FnMut(usize, &MixtureState, &StepDiagnostics) -> Result<()>,
) -> Result<(MixtureState, Trajectory)> {
    config.validate()?;
    if target.dim() != initial.dim() {
        return Err(Error::DimensionMismatch {
            expected: initial.dim(),
            found: target.dim(),
        });
    }
    let mut trajectory = Trajectory::default();
    let (mut state, report) = anneal_init(&initial, target, config)?;
    trajectory.anneal = report;
    if config.snapshot_every > 0 {
        trajectory.snapshots.push((0, state.clone()));
    }
    for n in 1..=config.n_iter {
        let started = Instant::now();
        let (next, diag) = step_once(&state, target, config, n).map_err(|e| e.at_iteration(n))?;
        let diag = StepDiagnostics {
            wall_time: started.elapsed().as_secs_f64(),
            ..diag
        };
        state = next;
        if config.snapshot_every > 0 && n % config.snapshot_every == 0 {
            trajectory.snapshots.push((n, state.clone()));
        }
        observer(n, &state, &diag).map_err(|e| e.at_iteration(n))?;
        log::debug!(
            "step {n}: dt {:.3e} max|E| {:.3e}",
            diag.dt,
            diag.max_e_norm
        );
        trajectory.diagnostics.push(diag);
    }
    Ok((state, trajectory))
}

fn step_once<T: TargetPotential + ?Sized>(
    state: &MixtureState,
    target: &T,
    config: &IntegratorConfig,
    n: usize,
) -> Result<(MixtureState, StepDiagnostics)> {
    let moments = main_moments(state, target, config, n)?;
    let eta = scheduler_eta(
        config.scheduler.kind,
        n,
        config.n_iter,
        config.scheduler.eta_min,
    );
    let (next, dt) = advance(state, &moments, eta, config)?;
    let diag = StepDiagnostics {
        n,
        dt,
        eta,
        max_e_norm: moments.max_e_norm(),
        weights: next.weights(),
        f_bars: moments.f_bars(),
        wall_time: 0.0,
    };
    Ok((next, diag))
}
