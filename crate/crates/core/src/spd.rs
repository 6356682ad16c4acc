//! Dense symmetric and SPD linear algebra.
//!
//! Three newtypes carry the structural invariants the integrator relies on:
//! [`SymMatrix`] (exactly symmetric storage), [`SpdMatrix`] (symmetric, positive
//! definite) and [`SqrtFactor`] (lower triangular with a positive diagonal).
//! On top of them sit the affine-invariant manifold maps: [`exp_map`],
//! [`log_map`] and [`riemannian_distance`]. The manifold maps accept any square
//! root of the base point through the [`MatrixRoot`] trait; their results do
//! not depend on which root is used.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const EIG_MAX_ITER: usize = 10_000;

/// Returns `(m + mᵀ) / 2`. The result is symmetric bit for bit.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "symmetrize needs a square matrix");
    let mut out = m.clone();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Relative Frobenius error `‖a − reference‖_F / max(1, ‖reference‖_F)`.
pub fn rel_frobenius_error(a: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    (a - reference).norm() / reference.norm().max(1.0)
}

/// A symmetric matrix. Construction symmetrizes its input.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        SymMatrix(symmetrize(m))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SymMatrix(&self.0 * factor)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// A symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    /// Symmetrizes `m` and verifies positive definiteness with a Cholesky pass.
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let sym = SymMatrix::from_matrix(m);
        cholesky(&sym)?;
        Ok(SpdMatrix(sym.0))
    }

    pub fn identity(n: usize) -> Self {
        SpdMatrix(DMatrix::identity(n, n))
    }

    /// `scale · I`.
    pub fn scaled_identity(n: usize, scale: f64) -> Result<Self> {
        SpdMatrix::new(&(DMatrix::identity(n, n) * scale))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        SpdMatrix::new(&DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Wraps a matrix whose symmetry and definiteness hold by construction.
    pub(crate) fn from_trusted(m: DMatrix<f64>) -> Self {
        SpdMatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn as_sym(&self) -> SymMatrix {
        SymMatrix(self.0.clone())
    }

    pub fn factor(&self) -> Result<SqrtFactor> {
        cholesky(&self.as_sym())
    }
}

/// Lower-triangular square root `L` with a strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SqrtFactor(DMatrix<f64>);

impl SqrtFactor {
    /// Checks shape, triangularity and diagonal positivity.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: m.ncols(),
            });
        }
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        for j in 0..n {
            for i in 0..j {
                if m[(i, j)] != 0.0 {
                    return Err(Error::InvalidConfig(
                        "square-root factor must be lower triangular".into(),
                    ));
                }
            }
            if m[(j, j)] <= 0.0 {
                return Err(Error::SingularFactor { index: j });
            }
        }
        Ok(SqrtFactor(m))
    }

    pub fn identity(n: usize) -> Self {
        SqrtFactor(DMatrix::identity(n, n))
    }

    /// `sqrt(scale) · I`, the factor of `scale · I`.
    pub fn scaled_identity(n: usize, scale: f64) -> Result<Self> {
        SqrtFactor::new(DMatrix::identity(n, n) * scale.sqrt())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// `L · Lᵀ`.
    pub fn covariance(&self) -> SpdMatrix {
        SpdMatrix::from_trusted(symmetrize(&(&self.0 * self.0.transpose())))
    }

    /// `Σ ln L_ii`, i.e. half the log-determinant of `L · Lᵀ`.
    pub fn log_det_sqrt(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].ln()).sum()
    }

    /// Solves `L x = b` by forward substitution.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; b.len()];
        forward_solve(&self.0, b, &mut out);
        out
    }
}

/// Forward substitution `L x = b` for lower-triangular `L`.
///
/// Accumulation order is fixed (`c` ascending); the batched evaluation in
/// [`crate::mixture`] reproduces it exactly so both paths agree bit for bit.
pub fn forward_solve(l: &DMatrix<f64>, b: &[f64], out: &mut [f64]) {
    let n = l.nrows();
    debug_assert_eq!(b.len(), n);
    for r in 0..n {
        let mut acc = b[r];
        for c in 0..r {
            acc -= l[(r, c)] * out[c];
        }
        out[r] = acc / l[(r, r)];
    }
}

/// `½ ‖L⁻¹ (y − m)‖²` with the same operation order as the batched mixture path.
pub fn half_sq_mahalanobis(
    l: &DMatrix<f64>,
    mean: &[f64],
    y: &[f64],
    scratch: &mut Vec<f64>,
) -> f64 {
    let n = l.nrows();
    scratch.clear();
    scratch.extend(y.iter().zip(mean).map(|(a, b)| a - b));
    let centered = scratch.clone();
    forward_solve(l, &centered, scratch);
    let mut s = 0.0;
    for v in scratch.iter().take(n) {
        s += v * v;
    }
    0.5 * s
}

/// A square root `R` of an SPD matrix `X = R Rᵀ`, not necessarily triangular.
pub trait MatrixRoot {
    fn matrix(&self) -> &DMatrix<f64>;

    /// Solves `R X = B`.
    fn solve_left(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

impl MatrixRoot for SqrtFactor {
    fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    fn solve_left(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        for i in 0..self.dim() {
            if self.0[(i, i)] == 0.0 {
                return Err(Error::SingularFactor { index: i });
            }
        }
        self.0
            .solve_lower_triangular(b)
            .ok_or(Error::SingularFactor { index: 0 })
    }
}

/// An arbitrary invertible square root, solved through an LU factorization.
#[derive(Debug, Clone)]
pub struct GeneralRoot(pub DMatrix<f64>);

impl MatrixRoot for GeneralRoot {
    fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    fn solve_left(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.0
            .clone()
            .lu()
            .solve(b)
            .ok_or(Error::SingularFactor { index: 0 })
    }
}

/// Cholesky factorization `S = L Lᵀ`.
pub fn cholesky(s: &SymMatrix) -> Result<SqrtFactor> {
    let a = s.as_matrix();
    let n = a.nrows();
    if !s.is_finite() {
        return Err(Error::NonFinite);
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(SqrtFactor(l))
}

/// Eigendecomposition of a symmetric matrix with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    /// Orthogonal matrix whose columns are the eigenvectors.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// `Q · diag(f(λ)) · Qᵀ`, symmetrized.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let fl = f(lam);
            scaled.column_mut(j).scale_mut(fl);
        }
        symmetrize(&(scaled * self.vectors.transpose()))
    }
}

pub fn sym_eig(s: &SymMatrix) -> Result<SymEigen> {
    if !s.is_finite() {
        return Err(Error::NoConvergence);
    }
    let eig = SymmetricEigen::try_new(s.as_matrix().clone(), f64::EPSILON, EIG_MAX_ITER)
        .ok_or(Error::NoConvergence)?;
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEigen { values, vectors })
}

/// Matrix exponential of a symmetric matrix through its eigendecomposition.
pub fn sym_expm(s: &SymMatrix) -> Result<SpdMatrix> {
    let eig = sym_eig(s)?;
    Ok(SpdMatrix::from_trusted(eig.map(f64::exp)))
}

/// Principal matrix logarithm of an SPD matrix.
pub fn sym_logm(s: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eig(s)?;
    if let Some(i) = eig.values.iter().position(|&v| v <= 0.0) {
        return Err(Error::NotPositiveDefinite {
            index: i,
            pivot: eig.values[i],
        });
    }
    Ok(SymMatrix(eig.map(f64::ln)))
}

/// Spectral norm `max |λ_i|` of a symmetric matrix.
pub fn spectral_norm_sym(s: &SymMatrix) -> Result<f64> {
    let eig = sym_eig(s)?;
    Ok(eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// `R⁻¹ S R⁻ᵀ` for symmetric `S`.
fn whiten<R: MatrixRoot>(root: &R, s: &DMatrix<f64>) -> Result<SymMatrix> {
    let left = root.solve_left(s)?;
    let both = root.solve_left(&left.transpose())?;
    Ok(SymMatrix::from_matrix(&both))
}

/// `R · S · Rᵀ`, symmetrized.
fn color<R: MatrixRoot>(root: &R, s: &DMatrix<f64>) -> DMatrix<f64> {
    let r = root.matrix();
    symmetrize(&(r * s * r.transpose()))
}

/// Exponential map at `X = R Rᵀ`: `R · exp(R⁻¹ σ R⁻ᵀ) · Rᵀ`.
pub fn exp_map<R: MatrixRoot>(root: &R, tangent: &SymMatrix) -> Result<SpdMatrix> {
    check_dims(root.matrix().nrows(), tangent.dim())?;
    let inner = whiten(root, tangent.as_matrix())?;
    let e = sym_expm(&inner)?;
    Ok(SpdMatrix::from_trusted(color(root, e.as_matrix())))
}

/// Logarithmic map at `X = R Rᵀ`: `R · log(R⁻¹ Y R⁻ᵀ) · Rᵀ`.
pub fn log_map<R: MatrixRoot>(root: &R, target: &SpdMatrix) -> Result<SymMatrix> {
    check_dims(root.matrix().nrows(), target.dim())?;
    let inner = whiten(root, target.as_matrix())?;
    let l = sym_logm(&inner)?;
    Ok(SymMatrix(color(root, l.as_matrix())))
}

/// Affine-invariant distance `‖log(R⁻¹ Y R⁻ᵀ)‖_F` for any root `R` of `X`.
pub fn riemannian_distance_with_root<R: MatrixRoot>(root: &R, y: &SpdMatrix) -> Result<f64> {
    check_dims(root.matrix().nrows(), y.dim())?;
    let inner = whiten(root, y.as_matrix())?;
    let eig = sym_eig(&inner)?;
    if let Some(i) = eig.values.iter().position(|&v| v <= 0.0) {
        return Err(Error::NotPositiveDefinite {
            index: i,
            pivot: eig.values[i],
        });
    }
    Ok(eig
        .values
        .iter()
        .map(|v| v.ln().powi(2))
        .sum::<f64>()
        .sqrt())
}

pub fn riemannian_distance(x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    riemannian_distance_with_root(&x.factor()?, y)
}

/// Lower-triangular `L` with positive diagonal such that `L Lᵀ = B Bᵀ`.
///
/// Computed from a Householder QR of `Bᵀ` without ever forming `B Bᵀ`, so the
/// factor is available even when the product would overflow or lose its
/// smallest eigenvalues to rounding. Rows of `Bᵀ` should be ordered by
/// decreasing magnitude for best accuracy on strongly graded inputs.
pub fn triangular_root(b: &DMatrix<f64>) -> Result<SqrtFactor> {
    let n = b.nrows();
    check_dims(n, b.ncols())?;
    if !b.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut a = b.transpose();
    let mut u = vec![0.0; n];
    for k in 0..n {
        let len = n - k;
        let scale = (k..n).fold(0.0_f64, |m, i| m.max(a[(i, k)].abs()));
        if scale == 0.0 {
            return Err(Error::NotPositiveDefinite {
                index: k,
                pivot: 0.0,
            });
        }
        let norm = scaled_norm((k..n).map(|i| a[(i, k)]), scale);
        let x0 = a[(k, k)];
        let beta = if x0 >= 0.0 { -norm } else { norm };
        // u = (x − beta e₁) / ‖x − beta e₁‖
        for (t, i) in (k..n).enumerate() {
            u[t] = a[(i, k)];
        }
        u[0] -= beta;
        let uscale = u[..len].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let unorm = scaled_norm(u[..len].iter().copied(), uscale);
        for v in &mut u[..len] {
            *v /= unorm;
        }
        a[(k, k)] = beta;
        for i in (k + 1)..n {
            a[(i, k)] = 0.0;
        }
        for j in (k + 1)..n {
            let mut dot = 0.0;
            for (t, i) in (k..n).enumerate() {
                dot += u[t] * a[(i, j)];
            }
            let two_dot = 2.0 * dot;
            for (t, i) in (k..n).enumerate() {
                a[(i, j)] -= two_dot * u[t];
            }
        }
    }
    // a now holds R with A = Q R; L = Rᵀ with the row signs flipped to make diag(L) > 0.
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        let sign = if a[(i, i)] < 0.0 { -1.0 } else { 1.0 };
        for j in i..n {
            l[(j, i)] = sign * a[(i, j)];
        }
    }
    SqrtFactor::new(l)
}

fn scaled_norm(values: impl Iterator<Item = f64>, scale: f64) -> f64 {
    let s: f64 = values.map(|v| (v / scale) * (v / scale)).sum();
    scale * s.sqrt()
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
