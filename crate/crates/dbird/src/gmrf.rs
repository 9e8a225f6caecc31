//! Banded linear algebra for Gaussian Markov random-walk conditionals.
//!
//! Every full conditional of a latent trajectory in this model has a symmetric
//! tridiagonal precision matrix `Q`: the random-walk prior couples neighboring
//! time points and the likelihood only adds to the diagonal. This module
//! factors `Q = L Lᵀ` with `L` lower bidiagonal and solves / samples in O(T),
//! which is what makes long trajectories cheap.
//!
//! Sampling uses the canonical parametrization: given `(Q, b)` describing
//! `N(Q⁻¹ b, Q⁻¹)`, draw `z ~ N(0, I)` and return `Q⁻¹ b + L⁻ᵀ z`.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Tolerance below which a Cholesky pivot is treated as a failure rather than
/// a number. The conditionals built by the sampler are strictly diagonally
/// dominant, so a pivot this small signals a bug or corrupted input, not a
/// borderline matrix worth rescuing.
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GmrfError {
    #[error("matrix is not positive definite: pivot {pivot:.3e} at index {index}")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch: {context} has length {got}, expected {expected}")]
    DimensionMismatch { context: &'static str, expected: usize, got: usize },
}

/// Symmetric tridiagonal matrix stored as its diagonal and first
/// off-diagonal. `offdiag.len() == dim - 1`; both bands may be any finite
/// values, positive definiteness is checked at factorization time.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self, GmrfError> {
        if diag.is_empty() {
            return Err(GmrfError::DimensionMismatch { context: "diag", expected: 1, got: 0 });
        }
        if offdiag.len() + 1 != diag.len() {
            return Err(GmrfError::DimensionMismatch {
                context: "offdiag",
                expected: diag.len() - 1,
                got: offdiag.len(),
            });
        }
        Ok(Self { diag, offdiag })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }
}

/// Lower bidiagonal Cholesky factor `L` with `L Lᵀ` equal to the factored
/// matrix. `diag` entries are strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct BidiagonalFactor {
    pub diag: Vec<f64>,
    pub subdiag: Vec<f64>,
}

impl BidiagonalFactor {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }
}

/// Cholesky-factors a symmetric tridiagonal matrix in O(dim).
///
/// Fails with [`GmrfError::NotPositiveDefinite`] when a pivot drops to
/// [`PIVOT_TOL`] or below; the matrix is never regularized silently.
pub fn factorize(q: &SymTridiagonal) -> Result<BidiagonalFactor, GmrfError> {
    let n = q.dim();
    let mut diag = Vec::with_capacity(n);
    let mut subdiag = Vec::with_capacity(n.saturating_sub(1));
    let mut pivot = q.diag[0];
    for i in 0..n {
        if pivot.is_nan() || pivot <= PIVOT_TOL {
            return Err(GmrfError::NotPositiveDefinite { index: i, pivot });
        }
        let l = pivot.sqrt();
        diag.push(l);
        if i + 1 < n {
            let m = q.offdiag[i] / l;
            subdiag.push(m);
            pivot = q.diag[i + 1] - m * m;
        }
    }
    Ok(BidiagonalFactor { diag, subdiag })
}

/// Solves `L Lᵀ x = rhs` by forward then backward substitution.
pub fn solve(factor: &BidiagonalFactor, rhs: &[f64]) -> Result<Vec<f64>, GmrfError> {
    let n = factor.dim();
    if rhs.len() != n {
        return Err(GmrfError::DimensionMismatch { context: "rhs", expected: n, got: rhs.len() });
    }
    // Forward: L y = rhs.
    let mut x = vec![0.0; n];
    x[0] = rhs[0] / factor.diag[0];
    for i in 1..n {
        x[i] = (rhs[i] - factor.subdiag[i - 1] * x[i - 1]) / factor.diag[i];
    }
    // Backward: Lᵀ x = y, overwriting in place.
    x[n - 1] /= factor.diag[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (x[i] - factor.subdiag[i] * x[i + 1]) / factor.diag[i];
    }
    Ok(x)
}

/// Draws from `N(Q⁻¹ b, Q⁻¹)` given the canonical pair `(q, b)`.
pub fn sample_canonical<R: Rng + ?Sized>(
    q: &SymTridiagonal,
    b: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>, GmrfError> {
    let noise: Vec<f64> = (0..q.dim()).map(|_| rng.sample(StandardNormal)).collect();
    sample_canonical_with_noise(q, b, &noise)
}

/// Deterministic core of [`sample_canonical`]: consumes an explicit vector of
/// standard normal variates. With `noise` all zero this returns exactly the
/// conditional mean `Q⁻¹ b`, which pins down the solve path in tests.
pub fn sample_canonical_with_noise(
    q: &SymTridiagonal,
    b: &[f64],
    noise: &[f64],
) -> Result<Vec<f64>, GmrfError> {
    let n = q.dim();
    if b.len() != n {
        return Err(GmrfError::DimensionMismatch { context: "b", expected: n, got: b.len() });
    }
    if noise.len() != n {
        return Err(GmrfError::DimensionMismatch { context: "noise", expected: n, got: noise.len() });
    }
    let factor = factorize(q)?;
    let mut x = solve(&factor, b)?;
    // Perturbation Lᵀ u = z has covariance L⁻ᵀ L⁻¹ = Q⁻¹.
    let mut u = vec![0.0; n];
    u[n - 1] = noise[n - 1] / factor.diag[n - 1];
    for i in (0..n - 1).rev() {
        u[i] = (noise[i] - factor.subdiag[i] * u[i + 1]) / factor.diag[i];
    }
    for i in 0..n {
        x[i] += u[i];
    }
    Ok(x)
}
