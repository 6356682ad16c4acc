//! Karhunen–Loève basis of the log-permeability field.

use std::f64::consts::PI;

pub const TAU: f64 = 3.0;
pub const DECAY: f64 = 2.0;
const MIN_INDEX_BOUND: u32 = 16;

/// Leading KL modes `l = (l₁, l₂)`, sorted by decreasing eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct KlBasis {
    pub modes: Vec<(u32, u32)>,
    pub eigenvalues: Vec<f64>,
    sqrt_eigenvalues: Vec<f64>,
}

pub fn kl_eigenvalue(l1: u32, l2: u32) -> f64 {
    let s = (l1 * l1 + l2 * l2) as f64;
    (PI * PI * s + TAU * TAU).powf(-DECAY)
}

/// The `n_theta` largest eigenpairs; ties are ordered lexicographically by `(l₁, l₂)`.
pub fn kl_eigenpairs(n_theta: usize) -> KlBasis {
    assert!(n_theta >= 1, "need at least one KL mode");
    let bound = MIN_INDEX_BOUND.max(n_theta as u32);
    let mut all: Vec<((u32, u32), f64)> = Vec::new();
    for l1 in 0..=bound {
        for l2 in 0..=bound {
            if (l1, l2) != (0, 0) {
                all.push(((l1, l2), kl_eigenvalue(l1, l2)));
            }
        }
    }
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(n_theta);
    let eigenvalues: Vec<f64> = all.iter().map(|m| m.1).collect();
    KlBasis {
        modes: all.iter().map(|m| m.0).collect(),
        sqrt_eigenvalues: eigenvalues.iter().map(|v| v.sqrt()).collect(),
        eigenvalues,
    }
}

impl KlBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn sqrt_eigenvalues(&self) -> &[f64] {
        &self.sqrt_eigenvalues
    }

    /// `√2 cos(π l₁ x₁)`, `√2 cos(π l₂ x₂)` or `2 cos(π l₁ x₁) cos(π l₂ x₂)`.
    pub fn eigenfunction(&self, mode: usize, x1: f64, x2: f64) -> f64 {
        let (l1, l2) = self.modes[mode];
        let c1 = (PI * l1 as f64 * x1).cos();
        let c2 = (PI * l2 as f64 * x2).cos();
        mode_scale(l1, l2) * c1 * c2
    }

    /// `log a(x) = Σ_l θ_l √λ_l φ_l(x)` at arbitrary points.
    pub fn log_permeability(&self, theta: &[f64], points: &[(f64, f64)]) -> Vec<f64> {
        assert_eq!(theta.len(), self.len());
        points
            .iter()
            .map(|&(x1, x2)| {
                let mut s = 0.0;
                for (k, t) in theta.iter().enumerate() {
                    s += t * self.sqrt_eigenvalues[k] * self.eigenfunction(k, x1, x2);
                }
                s
            })
            .collect()
    }

    /// Flips the sign of every coefficient whose mode has odd `l₁`; the field becomes `x₁ ↦ 1 − x₁`.
    pub fn mirror_coeffs(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.modes)
            .map(|(t, &(l1, _))| if l1 % 2 == 1 { -t } else { *t })
            .collect()
    }
}

fn mode_scale(l1: u32, l2: u32) -> f64 {
    if l1 == 0 || l2 == 0 {
        std::f64::consts::SQRT_2
    } else {
        2.0
    }
}

/// `cos(π k / (2n))` for any integer `k`, built from one exact quadrant so that
/// reflections `cos(π − x) = −cos x` and `cos(2π − x) = cos x` hold bit for bit.
#[derive(Debug, Clone)]
struct QuarterCosine {
    n: usize,
    quadrant: Vec<f64>,
}

impl QuarterCosine {
    fn new(n: usize) -> Self {
        let mut quadrant: Vec<f64> = (0..=n)
            .map(|k| (PI * k as f64 / (2 * n) as f64).cos())
            .collect();
        quadrant[n] = 0.0;
        QuarterCosine { n, quadrant }
    }

    fn get(&self, k: usize) -> f64 {
        let n = self.n;
        let k = k % (4 * n);
        if k <= n {
            self.quadrant[k]
        } else if k <= 2 * n {
            -self.quadrant[2 * n - k]
        } else if k <= 3 * n {
            -self.quadrant[k - 2 * n]
        } else {
            self.quadrant[4 * n - k]
        }
    }
}

/// Field sampled on the half-grid `(i h/2, j h/2)`, `0 ≤ i, j ≤ 2n`.
///
/// Nodes are the even indices; cell-face midpoints have one odd index.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfGridField {
    pub n: usize,
    /// Row-major over `j` (x₂), then `i` (x₁): `values[j * (2n + 1) + i]`.
    pub values: Vec<f64>,
}

impl HalfGridField {
    pub fn side(&self) -> usize {
        2 * self.n + 1
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.side() + i]
    }

    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let side = 2 * n + 1;
        let h2 = 1.0 / (2 * n) as f64;
        let mut values = Vec::with_capacity(side * side);
        for j in 0..side {
            for i in 0..side {
                values.push(f(i as f64 * h2, j as f64 * h2));
            }
        }
        HalfGridField { n, values }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        HalfGridField {
            n: self.n,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Values at the `(n+1)²` grid nodes, row-major in `x₂`.
    pub fn nodes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity((self.n + 1) * (self.n + 1));
        for j in 0..=self.n {
            for i in 0..=self.n {
                out.push(self.at(2 * i, 2 * j));
            }
        }
        out
    }
}

impl KlBasis {
    /// Log-permeability on the half-grid of an `n × n` mesh.
    ///
    /// Cosines come from a shared reflection-exact table, so mirrored
    /// coefficients give a field that is mirrored bit for bit.
    pub fn log_permeability_half_grid(&self, theta: &[f64], n: usize) -> HalfGridField {
        assert_eq!(theta.len(), self.len());
        let table = QuarterCosine::new(n);
        let side = 2 * n + 1;
        let mut values = vec![0.0; side * side];
        let mut c1 = vec![0.0; side];
        let mut c2 = vec![0.0; side];
        for (k, &(l1, l2)) in self.modes.iter().enumerate() {
            let coef = theta[k] * self.sqrt_eigenvalues[k] * mode_scale(l1, l2);
            for i in 0..side {
                c1[i] = table.get(l1 as usize * i);
                c2[i] = table.get(l2 as usize * i);
            }
            for j in 0..side {
                let cj = coef * c2[j];
                let row = &mut values[j * side..(j + 1) * side];
                for (v, ci) in row.iter_mut().zip(&c1) {
                    *v += cj * ci;
                }
            }
        }
        HalfGridField { n, values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leading_eigenvalues() {
        let b = kl_eigenpairs(32);
        let top = (PI * PI + 9.0).powi(-2);
        assert_eq!(b.modes[0], (0, 1));
        assert_eq!(b.modes[1], (1, 0));
        assert!((b.eigenvalues[0] - top).abs() < 1e-18);
        assert_eq!(b.eigenvalues[0], b.eigenvalues[1]);
        let l11 = (2.0 * PI * PI + 9.0).powi(-2);
        assert!(l11 < top);
        assert_eq!(b.modes[2], (1, 1));
        assert!((b.eigenvalues[2] - l11).abs() < 1e-18);
        assert_eq!(b.len(), 32);
        assert!(b.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn enumeration_bound_is_sufficient() {
        // The 32nd eigenvalue must exceed anything outside the enumeration box.
        let b = kl_eigenpairs(32);
        let outside = kl_eigenvalue(17, 0);
        assert!(*b.eigenvalues.last().unwrap() > outside);
    }

    #[test]
    fn zero_coefficients_give_unit_permeability() {
        let b = kl_eigenpairs(8);
        let v = b.log_permeability(&[0.0; 8], &[(0.1, 0.2), (0.7, 0.9)]);
        assert_eq!(v, vec![0.0, 0.0]);
    }

    #[test]
    fn single_mode_formula() {
        let b = kl_eigenpairs(4);
        let k = b.modes.iter().position(|&m| m == (1, 0)).unwrap();
        let mut theta = vec![0.0; 4];
        theta[k] = 1.0;
        for &(x1, x2) in &[(0.1, 0.3), (0.25, 0.5), (0.9, 0.05)] {
            let got = b.log_permeability(&theta, &[(x1, x2)])[0];
            let want = kl_eigenvalue(1, 0).sqrt() * 2f64.sqrt() * (PI * x1).cos();
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn even_l1_modes_are_mirror_symmetric() {
        let b = kl_eigenpairs(32);
        let theta: Vec<f64> = b
            .modes
            .iter()
            .enumerate()
            .map(|(k, &(l1, _))| {
                if l1 % 2 == 0 {
                    1.0 + 0.1 * k as f64
                } else {
                    0.0
                }
            })
            .collect();
        for &(x1, x2) in &[(0.1, 0.3), (0.37, 0.5), (0.05, 0.95)] {
            let a = b.log_permeability(&theta, &[(x1, x2), (1.0 - x1, x2)]);
            assert!((a[0] - a[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn half_grid_matches_direct_sum() {
        let b = kl_eigenpairs(16);
        let theta: Vec<f64> = (0..16).map(|k| ((k * 7 % 5) as f64 - 2.0) * 0.8).collect();
        let n = 10;
        let g = b.log_permeability_half_grid(&theta, n);
        for (i, j) in [(0, 0), (3, 7), (20, 11), (13, 20)] {
            let x = (i as f64 / 20.0, j as f64 / 20.0);
            let want = b.log_permeability(&theta, &[x])[0];
            assert!((g.at(i, j) - want).abs() < 1e-13);
        }
    }

    #[test]
    fn half_grid_mirror_is_exact() {
        let b = kl_eigenpairs(16);
        let theta: Vec<f64> = (0..16).map(|k| (k as f64 * 0.37).sin() * 3.0).collect();
        let n = 12;
        let g = b.log_permeability_half_grid(&theta, n);
        let m = b.log_permeability_half_grid(&b.mirror_coeffs(&theta), n);
        let side = 2 * n + 1;
        for j in 0..side {
            for i in 0..side {
                assert_eq!(g.at(i, j), m.at(side - 1 - i, j));
            }
        }
    }
}
