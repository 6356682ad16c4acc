//! Benchmark potentials `Φ_R` with `π ∝ exp(−Φ_R)`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mixture::{MixtureDensity, MixtureState};
use crate::rng::{stream_rng, BatchLabel, Phase};
use crate::spd::{half_sq_mahalanobis, SpdMatrix, SqrtFactor};

/// An un-normalized negative log density. Only values are exposed, never derivatives.
pub trait TargetPotential: Send + Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, theta: &[f64]) -> f64;

    /// Fallible evaluation, for potentials backed by an iterative solver.
    fn try_evaluate(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.evaluate(theta))
    }

    /// Log density of the `(θ₁, θ₂)` marginal, if known in closed form.
    fn reference_log_density_2d(&self, _x: f64, _y: f64) -> Option<f64> {
        None
    }

    /// Whether [`Self::reference_log_density_2d`] is already normalized.
    fn reference_is_normalized(&self) -> bool {
        false
    }

    /// `(m⋆, chol(C⋆))` when the potential is `½(θ − m⋆)ᵀ C⋆⁻¹ (θ − m⋆)` up to a constant.
    fn as_gaussian(&self) -> Option<(&DVector<f64>, &SqrtFactor)> {
        None
    }
}

impl<T: TargetPotential + ?Sized> TargetPotential for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate(&self, theta: &[f64]) -> f64 {
        (**self).evaluate(theta)
    }
    fn try_evaluate(&self, theta: &[f64]) -> Result<f64> {
        (**self).try_evaluate(theta)
    }
    fn reference_log_density_2d(&self, x: f64, y: f64) -> Option<f64> {
        (**self).reference_log_density_2d(x, y)
    }
    fn reference_is_normalized(&self) -> bool {
        (**self).reference_is_normalized()
    }
    fn as_gaussian(&self) -> Option<(&DVector<f64>, &SqrtFactor)> {
        (**self).as_gaussian()
    }
}

impl<T: TargetPotential + ?Sized> TargetPotential for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate(&self, theta: &[f64]) -> f64 {
        (**self).evaluate(theta)
    }
    fn try_evaluate(&self, theta: &[f64]) -> Result<f64> {
        (**self).try_evaluate(theta)
    }
    fn reference_log_density_2d(&self, x: f64, y: f64) -> Option<f64> {
        (**self).reference_log_density_2d(x, y)
    }
    fn reference_is_normalized(&self) -> bool {
        (**self).reference_is_normalized()
    }
    fn as_gaussian(&self) -> Option<(&DVector<f64>, &SqrtFactor)> {
        (**self).as_gaussian()
    }
}

/// `½ (θ − m⋆)ᵀ C⋆⁻¹ (θ − m⋆)`.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    mean: DVector<f64>,
    factor: SqrtFactor,
    mean_vec: Vec<f64>,
}

impl GaussianTarget {
    pub fn new(mean: DVector<f64>, covariance: &SpdMatrix) -> Result<Self> {
        Self::from_factor(mean, covariance.factor()?)
    }

    pub fn from_factor(mean: DVector<f64>, factor: SqrtFactor) -> Result<Self> {
        if mean.len() != factor.dim() {
            return Err(Error::DimensionMismatch {
                expected: factor.dim(),
                found: mean.len(),
            });
        }
        let mean_vec = mean.iter().copied().collect();
        Ok(GaussianTarget {
            mean,
            factor,
            mean_vec,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn factor(&self) -> &SqrtFactor {
        &self.factor
    }
}

impl TargetPotential for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn evaluate(&self, theta: &[f64]) -> f64 {
        let mut scratch = Vec::with_capacity(theta.len());
        half_sq_mahalanobis(self.factor.as_matrix(), &self.mean_vec, theta, &mut scratch)
    }

    fn reference_log_density_2d(&self, x: f64, y: f64) -> Option<f64> {
        if self.dim() < 2 {
            return None;
        }
        let c = self.factor.covariance().into_matrix();
        let (a, b, d) = (c[(0, 0)], c[(0, 1)], c[(1, 1)]);
        let det = a * d - b * b;
        let (dx, dy) = (x - self.mean[0], y - self.mean[1]);
        let q = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
        Some(-0.5 * q - (2.0 * PI).ln() - 0.5 * det.ln())
    }

    fn reference_is_normalized(&self) -> bool {
        true
    }

    fn as_gaussian(&self) -> Option<(&DVector<f64>, &SqrtFactor)> {
        Some((&self.mean, &self.factor))
    }
}

pub const CASE_A_MODES: usize = 10;
pub const CASE_A_STD: f64 = 0.3;
pub const CASE_A_BOX: f64 = 8.0;
pub const CASE_A_MIN_SEPARATION: f64 = 3.0;

/// Ten well separated equal-weight modes in `(θ₁, θ₂)` plus independent unit Gaussians.
#[derive(Debug, Clone)]
pub struct CaseA {
    d: usize,
    centers: Vec<[f64; 2]>,
    extra_means: Vec<f64>,
    mixture: MixtureDensity,
}

impl CaseA {
    pub fn new(d: usize, layout_seed: u64) -> Result<Self> {
        check_min_dim(d)?;
        let mut rng = stream_rng(
            layout_seed,
            BatchLabel {
                phase: Phase::Setup,
                iteration: 0,
                component: 0,
            },
        );
        let mut centers: Vec<[f64; 2]> = Vec::with_capacity(CASE_A_MODES);
        while centers.len() < CASE_A_MODES {
            let c = [
                rng.random_range(-CASE_A_BOX..CASE_A_BOX),
                rng.random_range(-CASE_A_BOX..CASE_A_BOX),
            ];
            let far = centers.iter().all(|o| {
                ((o[0] - c[0]).powi(2) + (o[1] - c[1]).powi(2)).sqrt() >= CASE_A_MIN_SEPARATION
            });
            if far {
                centers.push(c);
            }
        }
        let extra_means = (2..d).map(|_| rng.sample(StandardNormal)).collect();
        let state = MixtureState::with_unnormalized_weights(
            centers
                .iter()
                .map(|c| DVector::from_column_slice(c))
                .collect(),
            vec![SqrtFactor::scaled_identity(2, CASE_A_STD * CASE_A_STD)?; CASE_A_MODES],
            &[0.0; CASE_A_MODES],
        )?;
        Ok(CaseA {
            d,
            centers,
            extra_means,
            mixture: state.density(),
        })
    }

    pub fn centers(&self) -> &[[f64; 2]] {
        &self.centers
    }

    pub fn extra_means(&self) -> &[f64] {
        &self.extra_means
    }
}

impl TargetPotential for CaseA {
    fn dim(&self) -> usize {
        self.d
    }

    fn evaluate(&self, theta: &[f64]) -> f64 {
        let head = -self.mixture.log_density(&theta[..2]);
        let mut tail = 0.0;
        for (t, mu) in theta[2..].iter().zip(&self.extra_means) {
            tail += (t - mu) * (t - mu);
        }
        head + 0.5 * tail
    }

    fn reference_log_density_2d(&self, x: f64, y: f64) -> Option<f64> {
        Some(self.mixture.log_density(&[x, y]))
    }

    fn reference_is_normalized(&self) -> bool {
        true
    }
}

/// `½ ‖θᶜ − (θ₁ + θ₂)·1‖²`, the all-ones lift shared by Cases B and C.
fn ones_lift(theta: &[f64]) -> f64 {
    let s = theta[0] + theta[1];
    let mut acc = 0.0;
    for t in &theta[2..] {
        acc += (t - s) * (t - s);
    }
    0.5 * acc
}

/// Ring of radius one: `½ ((1 − θ₁² − θ₂²)/0.3)²`, lifted.
#[derive(Debug, Clone)]
pub struct CaseB {
    d: usize,
}

impl CaseB {
    pub fn new(d: usize) -> Result<Self> {
        check_min_dim(d)?;
        Ok(CaseB { d })
    }

    fn head(x: f64, y: f64) -> f64 {
        let r = (1.0 - x * x - y * y) / 0.3;
        0.5 * r * r
    }
}

impl TargetPotential for CaseB {
    fn dim(&self) -> usize {
        self.d
    }

    fn evaluate(&self, theta: &[f64]) -> f64 {
        Self::head(theta[0], theta[1]) + ones_lift(theta)
    }

    fn reference_log_density_2d(&self, x: f64, y: f64) -> Option<f64> {
        Some(-Self::head(x, y))
    }
}

/// Banana: `(1/20)(100(θ₂ − θ₁²)² + (1 − θ₁)²)`, lifted.
#[derive(Debug, Clone)]
pub struct CaseC {
    d: usize,
}

impl CaseC {
    pub fn new(d: usize) -> Result<Self> {
        check_min_dim(d)?;
        Ok(CaseC { d })
    }

    fn head(x: f64, y: f64) -> f64 {
        let a = 10.0 * (y - x * x);
        let b = 1.0 - x;
        (a * a + b * b) / 20.0
    }
}

impl TargetPotential for CaseC {
    fn dim(&self) -> usize {
        self.d
    }

    fn evaluate(&self, theta: &[f64]) -> f64 {
        Self::head(theta[0], theta[1]) + ones_lift(theta)
    }

    fn reference_log_density_2d(&self, x: f64, y: f64) -> Option<f64> {
        Some(-Self::head(x, y))
    }
}

/// Neal's funnel, `θ₁ ~ N(0, 9)`, `θᵢ | θ₁ ~ N(0, e^{θ₁})`, pinned so `Φ(0) = 0`.
#[derive(Debug, Clone)]
pub struct Funnel {
    d: usize,
}

impl Funnel {
    pub fn new(d: usize) -> Result<Self> {
        check_min_dim(d)?;
        Ok(Funnel { d })
    }
}

impl TargetPotential for Funnel {
    fn dim(&self) -> usize {
        self.d
    }

    fn evaluate(&self, theta: &[f64]) -> f64 {
        let t1 = theta[0];
        let mut ss = 0.0;
        for t in &theta[1..] {
            ss += t * t;
        }
        // ½ e^{−θ₁} Σθᵢ² in log scale; overflows to +inf only when the true value does.
        let scale = if ss == 0.0 { 0.0 } else { (ss.ln() - t1).exp() };
        t1 * t1 / 18.0 + 0.5 * (self.d - 1) as f64 * t1 + 0.5 * scale
    }

    fn reference_log_density_2d(&self, x: f64, y: f64) -> Option<f64> {
        let lx = -x * x / 18.0 - 0.5 * (18.0 * PI).ln();
        let ly = -0.5 * y * y * (-x).exp() - 0.5 * x - 0.5 * (2.0 * PI).ln();
        Some(lx + ly)
    }
}

/// `Φ / T` with `T ≥ 1`.
#[derive(Debug, Clone)]
pub struct Tempered<T> {
    base: T,
    temperature: f64,
}

pub fn temper<T: TargetPotential>(base: T, temperature: f64) -> Result<Tempered<T>> {
    if !(temperature >= 1.0) || !temperature.is_finite() {
        return Err(Error::InvalidTemperature(temperature));
    }
    Ok(Tempered { base, temperature })
}

impl<T> Tempered<T> {
    pub fn temperature(&self) -> f64 {
        self.temperature
    }
}

impl<T: TargetPotential> TargetPotential for Tempered<T> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn evaluate(&self, theta: &[f64]) -> f64 {
        self.base.evaluate(theta) / self.temperature
    }

    fn try_evaluate(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.base.try_evaluate(theta)? / self.temperature)
    }
}

/// `Φ + c`.
#[derive(Debug, Clone)]
pub struct Shifted<T> {
    base: T,
    shift: f64,
}

impl<T> Shifted<T> {
    pub fn new(base: T, shift: f64) -> Self {
        Shifted { base, shift }
    }
}

impl<T: TargetPotential> TargetPotential for Shifted<T> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn evaluate(&self, theta: &[f64]) -> f64 {
        self.base.evaluate(theta) + self.shift
    }

    fn try_evaluate(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.base.try_evaluate(theta)? + self.shift)
    }

    fn reference_log_density_2d(&self, x: f64, y: f64) -> Option<f64> {
        self.base.reference_log_density_2d(x, y)
    }

    fn reference_is_normalized(&self) -> bool {
        self.base.reference_is_normalized()
    }

    fn as_gaussian(&self) -> Option<(&DVector<f64>, &SqrtFactor)> {
        self.base.as_gaussian()
    }
}

/// Potential given by a closure, for tests and transformed problems.
pub struct FnTarget<F> {
    d: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnTarget<F> {
    pub fn new(d: usize, f: F) -> Self {
        FnTarget { d, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> TargetPotential for FnTarget<F> {
    fn dim(&self) -> usize {
        self.d
    }

    fn evaluate(&self, theta: &[f64]) -> f64 {
        (self.f)(theta)
    }
}

fn check_min_dim(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidConfig(format!(
            "target needs d >= 2, got {d}"
        )));
    }
    Ok(())
}
