//! Gaussian mixture state and its log density.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::{half_sq_mahalanobis, symmetrize, SpdMatrix, SqrtFactor};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// `x − logsumexp(x)`, evaluated with the usual max shift.
pub fn normalize_log_weights(log_w: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_w);
    log_w.iter().map(|v| v - lse).collect()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Means `m_k`, square roots `L_k` (with `C_k = L_k L_kᵀ`) and log-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureState {
    means: Vec<DVector<f64>>,
    sqrt_factors: Vec<SqrtFactor>,
    log_weights: Vec<f64>,
}

impl MixtureState {
    /// Validates shapes and finiteness. `log_weights` must already be normalized.
    pub fn new(
        means: Vec<DVector<f64>>,
        sqrt_factors: Vec<SqrtFactor>,
        log_weights: Vec<f64>,
    ) -> Result<Self> {
        let k = means.len();
        if k == 0 {
            return Err(Error::InvalidConfig(
                "mixture needs at least one component".into(),
            ));
        }
        for len in [sqrt_factors.len(), log_weights.len()] {
            if len != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: len,
                });
            }
        }
        let d = means[0].len();
        for (m, l) in means.iter().zip(&sqrt_factors) {
            if m.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: m.len(),
                });
            }
            if l.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: l.dim(),
                });
            }
            if !m.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        if !log_weights.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let lse = log_sum_exp(&log_weights);
        if lse.abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidConfig(format!(
                "log-weights are not normalized (logsumexp = {lse:e})"
            )));
        }
        Ok(MixtureState {
            means,
            sqrt_factors,
            log_weights,
        })
    }

    /// Like [`MixtureState::new`] but normalizes the log-weights first.
    pub fn with_unnormalized_weights(
        means: Vec<DVector<f64>>,
        sqrt_factors: Vec<SqrtFactor>,
        log_weights: &[f64],
    ) -> Result<Self> {
        if !log_weights.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Self::new(means, sqrt_factors, normalize_log_weights(log_weights))
    }

    /// Equal-weight mixture from means and covariances.
    pub fn from_covariances(means: Vec<DVector<f64>>, covariances: &[SpdMatrix]) -> Result<Self> {
        let factors = covariances
            .iter()
            .map(|c| c.factor())
            .collect::<Result<Vec<_>>>()?;
        let k = means.len();
        Self::with_unnormalized_weights(means, factors, &vec![0.0; k])
    }

    /// Single Gaussian `N(mean, L Lᵀ)`.
    pub fn single(mean: DVector<f64>, factor: SqrtFactor) -> Result<Self> {
        Self::new(vec![mean], vec![factor], vec![0.0])
    }

    pub fn num_components(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn sqrt_factors(&self) -> &[SqrtFactor] {
        &self.sqrt_factors
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|v| v.exp()).collect()
    }

    pub fn covariance(&self, k: usize) -> SpdMatrix {
        self.sqrt_factors[k].covariance()
    }

    pub(crate) fn set_means(&mut self, means: Vec<DVector<f64>>) {
        debug_assert_eq!(means.len(), self.means.len());
        self.means = means;
    }

    /// Reorders components; used by the relabeling tests.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        Self::new(
            order.iter().map(|&i| self.means[i].clone()).collect(),
            order
                .iter()
                .map(|&i| self.sqrt_factors[i].clone())
                .collect(),
            order.iter().map(|&i| self.log_weights[i]).collect(),
        )
    }

    pub fn density(&self) -> MixtureDensity {
        MixtureDensity::new(self)
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        self.density().log_density(theta)
    }

    pub fn to_document(&self) -> MixtureDocument {
        MixtureDocument {
            k: self.num_components(),
            d: self.dim(),
            means: self
                .means
                .iter()
                .map(|m| m.iter().copied().collect())
                .collect(),
            sqrt_factors: self
                .sqrt_factors
                .iter()
                .map(|l| matrix_rows(l.as_matrix()))
                .collect(),
            log_weights: self.log_weights.clone(),
        }
    }

    pub fn from_document(doc: &MixtureDocument) -> Result<Self> {
        if doc.means.len() != doc.k {
            return Err(Error::DimensionMismatch {
                expected: doc.k,
                found: doc.means.len(),
            });
        }
        let means = doc
            .means
            .iter()
            .map(|m| {
                if m.len() != doc.d {
                    return Err(Error::DimensionMismatch {
                        expected: doc.d,
                        found: m.len(),
                    });
                }
                Ok(DVector::from_column_slice(m))
            })
            .collect::<Result<Vec<_>>>()?;
        let factors = doc
            .sqrt_factors
            .iter()
            .map(|rows| SqrtFactor::new(matrix_from_rows(rows, doc.d)?))
            .collect::<Result<Vec<_>>>()?;
        Self::new(means, factors, doc.log_weights.clone())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_document()).expect("mixture document serializes")
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        let doc: MixtureDocument = toml::from_str(text).map_err(|e| e.to_string())?;
        Self::from_document(&doc).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|m| Error::parse(path, m))
    }
}

/// Plain-text form of a [`MixtureState`]. Matrices are lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureDocument {
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    pub means: Vec<Vec<f64>>,
    pub sqrt_factors: Vec<Vec<Vec<f64>>>,
    pub log_weights: Vec<f64>,
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rows.len(),
        });
    }
    for r in rows {
        if r.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: r.len(),
            });
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Log density at one point, split so that a matching quadratic potential
/// cancels exactly: `log ρ = lead_const − lead_half_quad + tail`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDensityParts {
    /// Component with the largest log term.
    pub lead: usize,
    /// `log w − Σ ln L_ii − (d/2) ln 2π` of the lead component.
    pub lead_const: f64,
    /// `½ ‖L⁻¹(y − m)‖²` of the lead component.
    pub lead_half_quad: f64,
    /// `ln(1 + Σ_{i≠lead} exp(a_i − a_lead))`.
    pub tail: f64,
}

impl LogDensityParts {
    pub fn value(&self) -> f64 {
        (self.lead_const - self.lead_half_quad) + self.tail
    }
}

/// Precomputed evaluator for `log Σ_k w_k N(y; m_k, L_k L_kᵀ)`.
#[derive(Debug, Clone)]
pub struct MixtureDensity {
    d: usize,
    means: Vec<Vec<f64>>,
    factors: Vec<DMatrix<f64>>,
    diag: Vec<Vec<f64>>,
    consts: Vec<f64>,
}

impl MixtureDensity {
    pub fn new(state: &MixtureState) -> Self {
        let d = state.dim();
        let half_log_2pi = 0.5 * d as f64 * (2.0 * PI).ln();
        MixtureDensity {
            d,
            means: state
                .means
                .iter()
                .map(|m| m.iter().copied().collect())
                .collect(),
            factors: state
                .sqrt_factors
                .iter()
                .map(|l| l.as_matrix().clone())
                .collect(),
            diag: Vec::new(),
            consts: state
                .log_weights
                .iter()
                .zip(&state.sqrt_factors)
                .map(|(lw, l)| lw - l.log_det_sqrt() - half_log_2pi)
                .collect(),
        }
        .with_diag()
    }

    fn with_diag(mut self) -> Self {
        self.diag = self
            .factors
            .iter()
            .map(|l| (0..self.d).map(|i| l[(i, i)]).collect())
            .collect();
        self
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn parts(&self, y: &[f64]) -> LogDensityParts {
        let mut scratch = Vec::with_capacity(self.d);
        let k = self.consts.len();
        let mut a = Vec::with_capacity(k);
        let mut hq = Vec::with_capacity(k);
        for i in 0..k {
            let q = half_sq_mahalanobis(&self.factors[i], &self.means[i], y, &mut scratch);
            hq.push(q);
            a.push(self.consts[i] - q);
        }
        combine(&a, &hq, &self.consts)
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        self.parts(y).value()
    }

    /// Parts for every row of `points` (`P × d`, one point per row).
    ///
    /// The arithmetic per point is the same sequence as [`Self::parts`], so both
    /// paths return identical bits.
    pub fn parts_batch(&self, points: &DMatrix<f64>) -> Vec<LogDensityParts> {
        assert_eq!(points.ncols(), self.d);
        let p = points.nrows();
        let k = self.consts.len();
        let d = self.d;
        let mut hq = vec![0.0; k * p];
        let mut z = vec![0.0; d * p];
        let mut acc = vec![0.0; p];
        let mut sq = vec![0.0; p];
        for i in 0..k {
            let l = &self.factors[i];
            let m = &self.means[i];
            sq.iter_mut().for_each(|s| *s = 0.0);
            for r in 0..d {
                let col = points.column(r);
                let mr = m[r];
                for (a, y) in acc.iter_mut().zip(col.iter()) {
                    *a = y - mr;
                }
                for c in 0..r {
                    let lrc = l[(r, c)];
                    let zc = &z[c * p..(c + 1) * p];
                    for (a, zv) in acc.iter_mut().zip(zc) {
                        *a -= lrc * zv;
                    }
                }
                let lrr = self.diag[i][r];
                let zr = &mut z[r * p..(r + 1) * p];
                for ((zv, a), s) in zr.iter_mut().zip(&acc).zip(sq.iter_mut()) {
                    *zv = a / lrr;
                    *s += *zv * *zv;
                }
            }
            for (h, s) in hq[i * p..(i + 1) * p].iter_mut().zip(&sq) {
                *h = 0.5 * s;
            }
        }
        let mut a = vec![0.0; k];
        let mut h = vec![0.0; k];
        (0..p)
            .map(|pt| {
                for i in 0..k {
                    h[i] = hq[i * p + pt];
                    a[i] = self.consts[i] - h[i];
                }
                combine(&a, &h, &self.consts)
            })
            .collect()
    }
}

fn combine(a: &[f64], hq: &[f64], consts: &[f64]) -> LogDensityParts {
    let mut lead = 0;
    for i in 1..a.len() {
        if a[i] > a[lead] {
            lead = i;
        }
    }
    let amax = a[lead];
    // Summed in ascending order so the result does not depend on component labels.
    let mut terms: Vec<f64> = a
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != lead)
        .map(|(_, ai)| (ai - amax).exp())
        .collect();
    terms.sort_by(f64::total_cmp);
    let s: f64 = terms.iter().sum();
    LogDensityParts {
        lead,
        lead_const: consts[lead],
        lead_half_quad: hq[lead],
        tail: s.ln_1p(),
    }
}

/// Overall mean `Σ w_k m_k` and covariance `Σ w_k (C_k + (m_k − m)(m_k − m)ᵀ)`.
pub fn mixture_moments(state: &MixtureState) -> (DVector<f64>, SpdMatrix) {
    let d = state.dim();
    let w = state.weights();
    let mut mean = DVector::zeros(d);
    for (wk, m) in w.iter().zip(state.means()) {
        mean += m * *wk;
    }
    let mut cov = DMatrix::zeros(d, d);
    for (k, (wk, m)) in w.iter().zip(state.means()).enumerate() {
        let dm = m - &mean;
        cov += (state.covariance(k).into_matrix() + &dm * dm.transpose()) * *wk;
    }
    (mean, SpdMatrix::from_trusted(symmetrize(&cov)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_state(rng: &mut ChaCha8Rng, k: usize, d: usize) -> MixtureState {
        let means = (0..k)
            .map(|_| DVector::from_fn(d, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let factors = (0..k)
            .map(|_| {
                let mut l = DMatrix::from_fn(d, d, |i, j| {
                    if i > j {
                        0.3 * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    }
                });
                for i in 0..d {
                    l[(i, i)] = 0.5 + rng.random::<f64>();
                }
                SqrtFactor::new(l).unwrap()
            })
            .collect();
        let lw: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        MixtureState::with_unnormalized_weights(means, factors, &lw).unwrap()
    }

    fn direct_log_density(state: &MixtureState, y: &[f64]) -> f64 {
        // Independent oracle: explicit inverse and determinant of each covariance.
        let d = state.dim();
        let y = DVector::from_column_slice(y);
        let mut total = 0.0;
        for k in 0..state.num_components() {
            let c = state.covariance(k).into_matrix();
            let inv = c.clone().try_inverse().unwrap();
            let dy = &y - &state.means()[k];
            let q = (dy.transpose() * inv * &dy)[(0, 0)];
            let norm = ((2.0 * PI).powi(d as i32) * c.determinant()).sqrt();
            total += state.log_weights()[k].exp() * (-0.5 * q).exp() / norm;
        }
        total.ln()
    }

    #[test]
    fn standard_normal_at_origin() {
        let s = MixtureState::single(DVector::zeros(2), SqrtFactor::identity(2)).unwrap();
        assert!((s.log_density(&[0.0, 0.0]) + (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn duplicate_components_match_single() {
        let one = MixtureState::single(DVector::zeros(2), SqrtFactor::identity(2)).unwrap();
        let two = MixtureState::with_unnormalized_weights(
            vec![DVector::zeros(2), DVector::zeros(2)],
            vec![SqrtFactor::identity(2), SqrtFactor::identity(2)],
            &[0.0, 0.0],
        )
        .unwrap();
        for y in [[0.0, 0.0], [1.0, -2.0], [3.0, 0.5]] {
            assert!((one.log_density(&y) - two.log_density(&y)).abs() < 1e-14);
        }
    }

    #[test]
    fn two_term_hand_evaluation() {
        let s = MixtureState::with_unnormalized_weights(
            vec![
                DVector::from_element(1, -1.0),
                DVector::from_element(1, 1.0),
            ],
            vec![SqrtFactor::identity(1), SqrtFactor::identity(1)],
            &[0.0, 0.0],
        )
        .unwrap();
        let want = ((-0.5f64).exp() / (2.0 * PI).sqrt()).ln();
        assert!((s.log_density(&[0.0]) - want).abs() < 1e-15);
    }

    #[test]
    fn matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (k, d) in [(1, 1), (3, 2), (5, 6)] {
            let s = random_state(&mut rng, k, d);
            for _ in 0..20 {
                let y: Vec<f64> = (0..d)
                    .map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let a = s.log_density(&y);
                let b = direct_log_density(&s, &y);
                assert!((a - b).abs() < 1e-10 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn far_from_all_components_stays_finite() {
        let s = MixtureState::with_unnormalized_weights(
            vec![
                DVector::from_element(1, -1.0),
                DVector::from_element(1, 1.0),
            ],
            vec![SqrtFactor::identity(1), SqrtFactor::identity(1)],
            &[0.0, 0.0],
        )
        .unwrap();
        let v = s.log_density(&[1e3]);
        assert!(v.is_finite());
        let want = -0.5 * 999.0f64.powi(2) - 0.5 * (2.0 * PI).ln() + 0.5f64.ln();
        assert!((v - want).abs() < 1e-9 * want.abs());
    }

    #[test]
    fn batch_matches_scalar_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_state(&mut rng, 4, 5);
        let dens = s.density();
        let pts = DMatrix::from_fn(37, 5, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
        let batch = dens.parts_batch(&pts);
        for (i, got) in batch.iter().enumerate() {
            let y: Vec<f64> = pts.row(i).iter().copied().collect();
            assert_eq!(*got, dens.parts(&y));
        }
    }

    #[test]
    fn integrates_to_one_in_2d() {
        let s = MixtureState::with_unnormalized_weights(
            vec![
                DVector::from_vec(vec![-1.0, 0.5]),
                DVector::from_vec(vec![1.5, -0.5]),
            ],
            vec![
                SqrtFactor::new(DMatrix::from_row_slice(2, 2, &[0.8, 0.0, 0.3, 0.6])).unwrap(),
                SqrtFactor::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.0, -0.2, 1.1])).unwrap(),
            ],
            &[0.3, -0.2],
        )
        .unwrap();
        let (lo, hi, n) = (-8.0, 8.0, 400);
        let h = (hi - lo) / n as f64;
        let dens = s.density();
        let mut mass = 0.0;
        for i in 0..n {
            for j in 0..n {
                let y = [lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h];
                mass += dens.log_density(&y).exp() * h * h;
            }
        }
        assert!((mass - 1.0).abs() < 1e-3, "mass {mass}");
    }

    #[test]
    fn normalize_examples() {
        let n = normalize_log_weights(&[0.0, 0.0]);
        assert!((n[0] + 2f64.ln()).abs() < 1e-15 && (n[1] + 2f64.ln()).abs() < 1e-15);

        let already = normalize_log_weights(&[0.3, -1.0, 2.0]);
        let again = normalize_log_weights(&already);
        for (a, b) in already.iter().zip(&again) {
            assert!((a - b).abs() < 1e-14);
        }

        // Oracle: ln(1 + e^-100) = e^-100 to double precision, so the outputs are -e^-100 and -100 - e^-100.
        let big = normalize_log_weights(&[100.0, 0.0]);
        let tiny = (-100f64).exp();
        assert!((big[0] + tiny).abs() < 1e-14);
        assert!((big[1] + 100.0 + tiny).abs() < 1e-12);
        assert!(log_sum_exp(&big).abs() < 1e-14);
    }

    #[test]
    fn moments_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let one = random_state(&mut rng, 1, 3);
        let (m, c) = mixture_moments(&one);
        assert_eq!(m, one.means()[0]);
        assert!(rel(&c, &one.covariance(0)) < 1e-15);

        let d = 3;
        let mut e = DVector::zeros(d);
        e[0] = 1.0;
        let two = MixtureState::with_unnormalized_weights(
            vec![e.clone(), -e],
            vec![SqrtFactor::identity(d), SqrtFactor::identity(d)],
            &[0.0, 0.0],
        )
        .unwrap();
        let (m, c) = mixture_moments(&two);
        assert!(m.norm() < 1e-15);
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 1.0]));
        assert!((c.as_matrix() - want).abs().max() < 1e-15);
    }

    fn rel(a: &SpdMatrix, b: &SpdMatrix) -> f64 {
        crate::spd::rel_frobenius_error(a.as_matrix(), b.as_matrix())
    }

    #[test]
    fn moments_match_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_state(&mut rng, 3, 2);
        let (m, c) = mixture_moments(&s);
        let n = 1_000_000;
        let w = s.weights();
        let mut sum = DVector::<f64>::zeros(2);
        let mut sum2 = DMatrix::<f64>::zeros(2, 2);
        let mut sum4 = DVector::<f64>::zeros(2);
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut k = 0;
            let mut acc = w[0];
            while u > acc && k + 1 < w.len() {
                k += 1;
                acc += w[k];
            }
            let z = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = &s.means()[k] + s.sqrt_factors()[k].as_matrix() * z;
            sum += &y;
            sum2 += &y * y.transpose();
            let dy = &y - &m;
            sum4 += dy.map(|v| v.powi(4));
        }
        let emp_mean = &sum / n as f64;
        let emp_cov = &sum2 / n as f64 - &emp_mean * emp_mean.transpose();
        for i in 0..2 {
            let se_mean = (c.as_matrix()[(i, i)] / n as f64).sqrt();
            assert!((emp_mean[i] - m[i]).abs() < 3.0 * se_mean);
            let var = c.as_matrix()[(i, i)];
            let se_var = ((sum4[i] / n as f64 - var * var) / n as f64).sqrt();
            assert!(
                (emp_cov[(i, i)] - var).abs() < 3.0 * se_var,
                "{} vs {}",
                emp_cov[(i, i)],
                var
            );
        }
    }

    #[test]
    fn toml_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_state(&mut rng, 3, 4);
        let text = s.to_toml();
        assert!(text.contains("K = 3"));
        let back = MixtureState::from_toml(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_unnormalized_weights() {
        let r = MixtureState::new(
            vec![DVector::zeros(1)],
            vec![SqrtFactor::identity(1)],
            vec![0.5],
        );
        assert!(r.is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn relabeling_is_exact(seed in 0u64..10_000, k in 2usize..6, d in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_state(&mut rng, k, d);
            let mut order: Vec<usize> = (0..k).collect();
            order.reverse();
            let p = s.permuted(&order).unwrap();
            let y: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            prop_assert_eq!(s.log_density(&y), p.log_density(&y));
        }

        #[test]
        fn root_rotation_leaves_density_unchanged(seed in 0u64..10_000, d in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_state(&mut rng, 2, d);
            let q = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q();
            let y: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            // Rotating the root gives the same covariance; rebuild its triangular factor
            // through the QR route and compare densities.
            let rotated: Vec<SqrtFactor> = s
                .sqrt_factors()
                .iter()
                .map(|l| crate::spd::triangular_root(&(l.as_matrix() * &q)).unwrap())
                .collect();
            let r = MixtureState::new(s.means().to_vec(), rotated, s.log_weights().to_vec()).unwrap();
            prop_assert!((s.log_density(&y) - r.log_density(&y)).abs() < 1e-10);
        }
    }
}
