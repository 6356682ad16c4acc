//! Whitened Gaussian recursions: the exact noise-free iteration, truncated
//! step rules, and the noisy recursion driven by a decaying schedule.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{scheduler_eta, step_covariance, SchedulerKind};
use crate::rng::{stream_rng, BatchLabel, Phase};
use crate::spd::{cholesky, spectral_norm_sym, sym_eig, SpdMatrix, SymMatrix};

pub const ITERATION_CAP: usize = 100_000;

/// `x e^{Δt (1 − x)}`.
pub fn h_scalar(x: f64, dt: f64) -> f64 {
    x * (dt * (1.0 - x)).exp()
}

/// `Σ_n = C⋆^{−1/2} C C⋆^{−1/2}` and `v_n`, the whitened mean offset.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianOracleState {
    pub sigma: SpdMatrix,
    pub v: DVector<f64>,
}

impl GaussianOracleState {
    pub fn new(sigma: SpdMatrix, v: DVector<f64>) -> Result<Self> {
        if v.len() != sigma.dim() {
            return Err(Error::DimensionMismatch {
                expected: sigma.dim(),
                found: v.len(),
            });
        }
        Ok(GaussianOracleState { sigma, v })
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    /// `‖Σ − I‖₂`.
    pub fn sigma_error(&self) -> Result<f64> {
        spectral_norm_sym(&shifted_identity(&self.sigma))
    }

    pub fn sigma_error_frobenius(&self) -> f64 {
        shifted_identity(&self.sigma).as_matrix().norm()
    }
}

fn shifted_identity(sigma: &SpdMatrix) -> SymMatrix {
    let n = sigma.dim();
    SymMatrix::from_matrix(&(sigma.as_matrix() - DMatrix::identity(n, n)))
}

/// `min(Δt_max, β / ‖Σ − I‖₂)`, or `Δt_max` at the fixed point.
fn oracle_dt(err: f64, dt_max: f64, beta: f64) -> f64 {
    if err == 0.0 {
        dt_max
    } else {
        dt_max.min(beta / err)
    }
}

/// One exact step: `v ← (I − Δt Σ) v`, `Σ ← h(Σ)` eigenvalue-wise.
pub fn oracle_step(
    state: &GaussianOracleState,
    dt_max: f64,
    beta: f64,
) -> Result<(GaussianOracleState, f64)> {
    let eig = sym_eig(&state.sigma.as_sym())?;
    let err = eig
        .values
        .iter()
        .map(|l| (l - 1.0).abs())
        .fold(0.0, f64::max);
    let dt = oracle_dt(err, dt_max, beta);
    let v = &state.v - state.sigma.as_matrix() * &state.v * dt;
    let sigma = SpdMatrix::new(&eig.map(|l| h_scalar(l, dt)))?;
    Ok((GaussianOracleState { sigma, v }, dt))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFreeReport {
    /// First `n` with `‖Σ_n − I‖₂ ≤ ε` and `‖v_n‖₂ ≤ ε`.
    pub iterations: usize,
    /// `‖Σ_n − I‖₂` for `n = 0..=iterations`.
    pub sigma_errors: Vec<f64>,
    pub v_norms: Vec<f64>,
    /// `Δt_n` for `n = 0..iterations`.
    pub dts: Vec<f64>,
}

/// Iterates [`oracle_step`] until both tolerances hold.
pub fn noise_free_experiment(
    sigma0: &SpdMatrix,
    v0: &DVector<f64>,
    dt_max: f64,
    beta: f64,
    eps: f64,
) -> Result<NoiseFreeReport> {
    if !(dt_max > 0.0 && dt_max <= 1.0 && beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "noise-free convergence needs 0 < dt_max, beta <= 1 (got {dt_max}, {beta})"
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tolerance must be positive, got {eps}"
        )));
    }
    let mut state = GaussianOracleState::new(sigma0.clone(), v0.clone())?;
    let mut report = NoiseFreeReport {
        iterations: 0,
        sigma_errors: vec![state.sigma_error()?],
        v_norms: vec![state.v.norm()],
        dts: Vec::new(),
    };
    loop {
        let n = report.dts.len();
        if report.sigma_errors[n] <= eps && report.v_norms[n] <= eps {
            report.iterations = n;
            return Ok(report);
        }
        if n >= ITERATION_CAP {
            return Err(Error::IterationCap { cap: ITERATION_CAP });
        }
        let (next, dt) = oracle_step(&state, dt_max, beta)?;
        state = next;
        report.dts.push(dt);
        report.sigma_errors.push(state.sigma_error()?);
        report.v_norms.push(state.v.norm());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathologyParams {
    /// Start for the `Δt_max`-only rule.
    pub sigma0_collapse: f64,
    /// Start for the `β`-only rule.
    pub sigma0_oscillate: f64,
    pub dt_max: f64,
    pub beta: f64,
}

impl Default for PathologyParams {
    fn default() -> Self {
        PathologyParams {
            sigma0_collapse: 100.0,
            sigma0_oscillate: 1.1,
            dt_max: 0.9,
            beta: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullRuleTrace {
    pub sigma0: f64,
    pub values: Vec<f64>,
    /// `|Σ_{n+1} − 1| ≤ |Σ_n − 1|` at every step.
    pub monotone: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathologyReport {
    pub params: PathologyParams,
    /// `Σ₁` under `Δt = Δt_max`.
    pub collapse_sigma1: f64,
    /// `Σ₁` under `Δt = β / |Σ₀ − 1|`.
    pub oscillate_sigma1: f64,
    pub oscillate_dt: f64,
    /// `(e^{−β/2}, e^{β/2})`.
    pub band: (f64, f64),
    pub started_inside: bool,
    pub left_band: bool,
    pub full_rule: Vec<FullRuleTrace>,
}

fn full_rule_trace(sigma0: f64, dt_max: f64, beta: f64) -> FullRuleTrace {
    let mut x = sigma0;
    let mut values = vec![x];
    let mut monotone = true;
    for _ in 0..200 {
        let dt = oracle_dt((x - 1.0).abs(), dt_max, beta);
        let next = h_scalar(x, dt);
        monotone &= (next - 1.0).abs() <= (x - 1.0).abs();
        x = next;
        values.push(x);
        if (x - 1.0).abs() <= 1e-14 {
            break;
        }
    }
    FullRuleTrace {
        sigma0,
        converged: (x - 1.0).abs() <= 1e-12,
        values,
        monotone,
    }
}

/// Scalar runs of the two single-term step rules next to the full rule.
pub fn single_term_pathologies(params: PathologyParams) -> Result<PathologyReport> {
    let PathologyParams {
        sigma0_collapse,
        sigma0_oscillate,
        dt_max,
        beta,
    } = params;
    if !(sigma0_collapse > 0.0 && sigma0_oscillate > 0.0 && sigma0_oscillate != 1.0) {
        return Err(Error::InvalidConfig(
            "pathology starts must be positive and differ from 1".into(),
        ));
    }
    let band = ((-beta / 2.0).exp(), (beta / 2.0).exp());
    let inside = |x: f64| x > band.0 && x < band.1;
    let oscillate_dt = beta / (sigma0_oscillate - 1.0).abs();
    let oscillate_sigma1 = h_scalar(sigma0_oscillate, oscillate_dt);
    Ok(PathologyReport {
        params,
        collapse_sigma1: h_scalar(sigma0_collapse, dt_max),
        oscillate_sigma1,
        oscillate_dt,
        band,
        started_inside: inside(sigma0_oscillate),
        left_band: !inside(oscillate_sigma1),
        full_rule: vec![
            full_rule_trace(sigma0_collapse, dt_max, beta),
            full_rule_trace(sigma0_oscillate, dt_max, beta),
        ],
    })
}

/// Entry scales of the injected errors `Ω_n` (symmetrized) and `w̃_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub omega_scale: f64,
    pub w_scale: f64,
}

impl NoiseSpec {
    pub fn zero() -> Self {
        NoiseSpec {
            omega_scale: 0.0,
            w_scale: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticParams {
    pub sigma0: SpdMatrix,
    pub v0: DVector<f64>,
    pub noise: NoiseSpec,
    pub scheduler: SchedulerKind,
    pub eta_min: f64,
    pub n_steps: usize,
    pub seeds: Vec<u64>,
    pub dt_max: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticRow {
    pub n: usize,
    /// `‖Σ_n − I‖_F`.
    pub sigma_error: f64,
    pub v_norm: f64,
    /// Step that produced this row; zero at `n = 0`.
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticTrace {
    pub seed: u64,
    pub rows: Vec<StochasticRow>,
}

impl StochasticTrace {
    pub fn at(&self, n: usize) -> &StochasticRow {
        &self.rows[n]
    }

    pub fn last(&self) -> &StochasticRow {
        self.rows.last().expect("trace starts with n = 0")
    }
}

fn stochastic_trace(p: &StochasticParams, seed: u64) -> Result<StochasticTrace> {
    let d = p.v0.len();
    let mut rng = stream_rng(
        seed,
        BatchLabel {
            phase: Phase::Main,
            iteration: 0,
            component: 0,
        },
    );
    let mut l = cholesky(&p.sigma0.as_sym())?;
    let mut v = p.v0.clone();
    let identity = DMatrix::<f64>::identity(d, d);
    let mut rows = Vec::with_capacity(p.n_steps + 1);
    let err = |l: &crate::spd::SqrtFactor| (l.covariance().into_matrix() - &identity).norm();
    rows.push(StochasticRow {
        n: 0,
        sigma_error: err(&l),
        v_norm: v.norm(),
        dt: 0.0,
    });
    for n in 1..=p.n_steps {
        let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let omega = (&a + a.transpose()) * (0.5 * p.noise.omega_scale);
        let w = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)) * p.noise.w_scale;
        let lm = l.as_matrix();
        // Exponent is Δt(−LᵀL + I + Ω) = −Δt E.
        let e = SymMatrix::from_matrix(&(lm.transpose() * lm - &identity - omega));
        let eta = scheduler_eta(p.scheduler, n, p.n_steps, p.eta_min);
        let norm = spectral_norm_sym(&e)?;
        let dt = if norm == 0.0 {
            eta * p.dt_max
        } else {
            (eta * p.dt_max).min(p.beta / norm)
        };
        v = &v - lm * (lm.transpose() * &v + w) * dt;
        l = step_covariance(&l, &e, dt).map_err(|e| e.at_iteration(n))?;
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite.at_iteration(n));
        }
        rows.push(StochasticRow {
            n,
            sigma_error: err(&l),
            v_norm: v.norm(),
            dt,
        });
    }
    Ok(StochasticTrace { seed, rows })
}

/// One trace per seed of the noisy whitened recursion.
pub fn stochastic_experiment(params: &StochasticParams) -> Result<Vec<StochasticTrace>> {
    if params.v0.len() != params.sigma0.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.sigma0.dim(),
            found: params.v0.len(),
        });
    }
    if !(params.noise.omega_scale >= 0.0 && params.noise.w_scale >= 0.0) {
        return Err(Error::InvalidConfig(
            "noise scales must be nonnegative".into(),
        ));
    }
    params
        .seeds
        .par_iter()
        .map(|&s| stochastic_trace(params, s))
        .collect()
}

/// Median of a nonempty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
