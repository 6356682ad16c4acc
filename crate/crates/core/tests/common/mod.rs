#![allow(dead_code)]

use std::cell::RefCell;

use gmflow_core::analysis::{oracle_step, GaussianOracleState};
use gmflow_core::integrator::{
    advance, draw_main_batches, estimate_moments, run_with_observer, scheduler_eta,
    step_covariance, IntegratorConfig, SchedulerKind,
};
use gmflow_core::rng::StandardNormalBatch;
use gmflow_core::spd::{exp_map, triangular_root, GeneralRoot};
use gmflow_core::targets::{FnTarget, GaussianTarget, TargetPotential};
use gmflow_core::{MixtureState, SpdMatrix, SqrtFactor, SymMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    normal_matrix(rng, d, d).qr().q()
}

/// `Q diag(λ) Qᵀ` with `ln λ` uniform on `[ln lo, ln hi]`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> SpdMatrix {
    let q = random_orthogonal(rng, d);
    let lam = DVector::from_fn(d, |_, _| (rng.random_range(lo.ln()..=hi.ln())).exp());
    let m = &q * DMatrix::from_diagonal(&lam) * q.transpose();
    SpdMatrix::new(&((&m + m.transpose()) * 0.5)).unwrap()
}

pub fn random_sym(rng: &mut ChaCha8Rng, d: usize) -> SymMatrix {
    let a = normal_matrix(rng, d, d);
    SymMatrix::from_matrix(&((&a + a.transpose()) * 0.5))
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Largest entrywise gap between `a` and `b`, relative to `max(1, max|b|)`.
pub fn scaled_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    max_abs(&(a - b)) / max_abs(b).max(1.0)
}

/// Whitened pair `(L⋆⁻¹ C L⋆⁻ᵀ, L⋆⁻¹ (m − m⋆))` of a single-component state.
pub fn whiten(state: &MixtureState, target: &GaussianTarget) -> (DMatrix<f64>, DVector<f64>) {
    let ls = target.factor().as_matrix();
    let x = ls
        .solve_lower_triangular(state.sqrt_factors()[0].as_matrix())
        .unwrap();
    let v = ls
        .solve_lower_triangular(&(&state.means()[0] - target.mean()))
        .unwrap();
    (&x * x.transpose(), v)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LockstepGap {
    pub state: f64,
    pub dt: f64,
}

/// Exact-mode integrator against the whitened oracle, one random Gaussian problem.
pub fn lockstep_gap(seed: u64, d: usize, steps: usize) -> LockstepGap {
    let mut r = rng(seed);
    let target = GaussianTarget::new(
        normal_vector(&mut r, d, 2.0),
        &random_spd(&mut r, d, 0.2, 5.0),
    )
    .unwrap();
    let c0 = random_spd(&mut r, d, 0.1, 10.0);
    let initial =
        MixtureState::single(normal_vector(&mut r, d, 3.0), c0.factor().unwrap()).unwrap();

    let mut config = IntegratorConfig::new(2, steps, seed);
    config.exact_expectations = true;
    config.scheduler.kind = SchedulerKind::Constant;

    let (sigma0, v0) = whiten(&initial, &target);
    let oracle =
        RefCell::new(GaussianOracleState::new(SpdMatrix::new(&sigma0).unwrap(), v0).unwrap());
    let mut gap = LockstepGap::default();
    run_with_observer(&config, &target, initial, &mut |_, state, diag| {
        let (next, dt) = oracle_step(&oracle.borrow(), config.dt_max, config.beta)?;
        let (sigma, v) = whiten(state, &target);
        gap.state = gap
            .state
            .max(scaled_gap(&sigma, next.sigma.as_matrix()))
            .max((&v - &next.v).amax() / next.v.amax().max(1.0));
        gap.dt = gap.dt.max((diag.dt - dt).abs());
        *oracle.borrow_mut() = next;
        Ok(())
    })
    .unwrap();
    gap
}

pub fn rosenbrock(theta: &[f64]) -> f64 {
    let (x, y) = (theta[0], theta[1]);
    0.5 * (1.0 - x).powi(2) + 2.5 * (y - x * x).powi(2)
}

/// Invertible `U diag(s) Vᵀ` with singular values in `[0.1, 10]`.
pub fn random_transform(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let u = random_orthogonal(rng, d);
    let v = random_orthogonal(rng, d);
    let s = DVector::from_fn(d, |_, _| 10f64.powf(rng.random_range(-1.0..=1.0)));
    u * DMatrix::from_diagonal(&s) * v.transpose()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AffineGap {
    pub params: f64,
    pub dt: f64,
    pub condition: f64,
}

/// Runs the Rosenbrock problem and its image under `θ ↦ Tθ + b` side by side.
///
/// The transformed run draws the standard batches; the original run sees
/// them rotated by `Q = (T L)⁻¹ L̃`, so both evaluate the target at
/// corresponding points.
pub fn affine_gap(seed: u64, steps: usize) -> AffineGap {
    let mut r = rng(seed);
    let t = random_transform(&mut r, 2);
    let b = normal_vector(&mut r, 2, 1.0);
    let t_inv = t.clone().try_inverse().unwrap();
    let sv = t.singular_values();
    let condition = sv.max() / sv.min();

    let k = 3;
    let means: Vec<DVector<f64>> = (0..k).map(|_| normal_vector(&mut r, 2, 1.5)).collect();
    let factors: Vec<SqrtFactor> = (0..k)
        .map(|_| random_spd(&mut r, 2, 0.3, 2.0).factor().unwrap())
        .collect();
    let log_w: Vec<f64> = (0..k).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut state = MixtureState::with_unnormalized_weights(means, factors, &log_w).unwrap();
    let mut image = transform_state(&state, &t, &b);

    let original = FnTarget::new(2, rosenbrock);
    let ti = t_inv.clone();
    let bi = b.clone();
    let transformed = FnTarget::new(2, move |theta: &[f64]| {
        let x = &ti * (DVector::from_column_slice(theta) - &bi);
        rosenbrock(x.as_slice())
    });

    let config = IntegratorConfig::new(8, steps, seed);
    let mut gap = AffineGap {
        condition,
        ..AffineGap::default()
    };
    for n in 1..=steps {
        let batches = draw_main_batches(&config, n, k, 2).unwrap();
        let rotated: Vec<StandardNormalBatch> = batches
            .iter()
            .enumerate()
            .map(|(c, bt)| {
                let tl = &t * state.sqrt_factors()[c].as_matrix();
                let q = tl.try_inverse().unwrap() * image.sqrt_factors()[c].as_matrix();
                StandardNormalBatch {
                    label: bt.label,
                    samples: q * &bt.samples,
                }
            })
            .collect();
        let mo = estimate_moments(&state, &original, &rotated).unwrap();
        let mt = estimate_moments(&image, &transformed, &batches).unwrap();
        let eta = scheduler_eta(config.scheduler.kind, n, steps, config.scheduler.eta_min);
        let (s1, dt1) = advance(&state, &mo, eta, &config).unwrap();
        let (s2, dt2) = advance(&image, &mt, eta, &config).unwrap();
        state = s1;
        image = s2;
        gap.dt = gap.dt.max((dt1 - dt2).abs());
        let expected = transform_state(&state, &t, &b);
        for c in 0..k {
            let dm = &image.means()[c] - &expected.means()[c];
            gap.params = gap
                .params
                .max(dm.amax() / expected.means()[c].amax().max(1.0))
                .max(scaled_gap(
                    image.covariance(c).as_matrix(),
                    expected.covariance(c).as_matrix(),
                ))
                .max((image.weights()[c] - expected.weights()[c]).abs());
        }
    }
    gap
}

fn transform_state(state: &MixtureState, t: &DMatrix<f64>, b: &DVector<f64>) -> MixtureState {
    let means = state.means().iter().map(|m| t * m + b).collect();
    let factors = state
        .sqrt_factors()
        .iter()
        .map(|l| triangular_root(&(t * l.as_matrix())).unwrap())
        .collect();
    MixtureState::new(means, factors, state.log_weights().to_vec()).unwrap()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PositivityTally {
    pub calls: usize,
    pub failures: usize,
    /// Calls whose output covariance was also re-factorized from `L Lᵀ`.
    pub refactored: usize,
    pub max_step_norm: f64,
}

/// Seeded `step_covariance` calls with `‖E‖₂ Δt` log-uniform on `[1e-3, 1e3]`.
///
/// Every output must be a finite lower-triangular factor with a positive
/// diagonal. Where `‖E‖₂ Δt ≤ 10` the covariance `L Lᵀ` is also formed and
/// passed through nalgebra's Cholesky.
pub fn positivity_stress(seed: u64, calls: usize, max_dim: usize) -> PositivityTally {
    let mut r = rng(seed);
    let mut tally = PositivityTally::default();
    for _ in 0..calls {
        let d = r.random_range(1..=max_dim);
        let l = random_spd(&mut r, d, 0.1, 10.0).factor().unwrap();
        let e = random_sym(&mut r, d);
        let norm = e.as_matrix().symmetric_eigenvalues().amax();
        let target = 10f64.powf(r.random_range(-3.0..=3.0));
        let dt = r.random_range(0.05..=1.0);
        let e = e.scaled(target / (norm * dt));
        tally.calls += 1;
        tally.max_step_norm = tally.max_step_norm.max(target);
        let ok = match step_covariance(&l, &e, dt) {
            Ok(next) => {
                let m = next.as_matrix();
                let valid = m.iter().all(|v| v.is_finite())
                    && (0..d).all(|i| m[(i, i)] > 0.0 && (i + 1..d).all(|j| m[(i, j)] == 0.0));
                if valid && target <= 10.0 {
                    tally.refactored += 1;
                    (m * m.transpose()).cholesky().is_some()
                } else {
                    valid
                }
            }
            Err(_) => false,
        };
        if !ok {
            tally.failures += 1;
        }
    }
    tally
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ManifoldGap {
    pub step_vs_exp: f64,
    pub root_independence: f64,
}

/// `step_covariance(L, E, Δt)` against `exp_map(C, −Δt L E Lᵀ)`, and the
/// exponential map evaluated through a rotated root `L Q`.
pub fn manifold_gap(seed: u64, cases: usize) -> ManifoldGap {
    let mut r = rng(seed);
    let mut gap = ManifoldGap::default();
    for _ in 0..cases {
        let d = r.random_range(1..=10);
        let c = random_spd(&mut r, d, 0.1, 10.0);
        let l = c.factor().unwrap();
        let e = random_sym(&mut r, d);
        let dt = r.random_range(0.01..=1.0);
        let step = step_covariance(&l, &e, dt).unwrap().covariance();
        let lm = l.as_matrix();
        let tangent = SymMatrix::from_matrix(&(lm * e.as_matrix() * lm.transpose() * -dt));
        let via_exp = exp_map(&l, &tangent).unwrap();
        gap.step_vs_exp = gap
            .step_vs_exp
            .max(scaled_gap(step.as_matrix(), via_exp.as_matrix()));
        let rotated = GeneralRoot(lm * random_orthogonal(&mut r, d));
        let via_rotated = exp_map(&rotated, &tangent).unwrap();
        gap.root_independence = gap
            .root_independence
            .max(scaled_gap(via_rotated.as_matrix(), via_exp.as_matrix()));
    }
    gap
}

/// Moments of a state that equals the Gaussian target, for random batches.
/// Returns the number of cases where some entry of `g1` or `E` was nonzero.
pub fn sticking_the_landing(seed: u64, cases: usize) -> usize {
    let mut r = rng(seed);
    let mut nonzero = 0;
    for case in 0..cases {
        let d = r.random_range(1..=8);
        let j = r.random_range(2..=64);
        let mean = normal_vector(&mut r, d, 3.0);
        let l = random_spd(&mut r, d, 0.05, 20.0).factor().unwrap();
        let target = GaussianTarget::from_factor(mean.clone(), l.clone()).unwrap();
        let state = MixtureState::single(mean, l).unwrap();
        let batch = StandardNormalBatch {
            label: gmflow_core::rng::BatchLabel::main(case, 0),
            samples: normal_matrix(&mut r, d, j) * r.random_range(0.1..10.0),
        };
        let mo = estimate_moments(&state, &target, &[batch]).unwrap();
        let c = &mo.components[0];
        if c.g1.iter().any(|v| *v != 0.0) || c.e.as_matrix().iter().any(|v| *v != 0.0) {
            nonzero += 1;
        }
    }
    nonzero
}

/// Target potential evaluated at the weight-free mixture means; for logging.
pub fn potential_at_means<T: TargetPotential + ?Sized>(
    state: &MixtureState,
    target: &T,
) -> Vec<f64> {
    state
        .means()
        .iter()
        .map(|m| target.evaluate(m.as_slice()))
        .collect()
}
