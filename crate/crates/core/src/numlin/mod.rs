//! Dense real linear-algebra kernels.
//!
//! Everything here is a pure function of its inputs. Matrices are plain
//! [`nalgebra::DMatrix<f64>`] values; [`SymmetricPsdMatrix`] wraps the ones
//! that must stay symmetric positive semidefinite (covariances, Riccati
//! solutions).

mod balance;
pub(crate) mod care;
mod expm;
mod rank;
mod sylvester;

pub use balance::balance;
pub use care::{solve_care, solve_care_with, CareOptions};
pub use expm::{expm, van_loan_discretize};
pub use rank::{numerical_rank, DEFAULT_RANK_TOL};
pub use sylvester::{solve_lyapunov, solve_sylvester, solve_sylvester_kronecker, KRONECKER_MAX_UNKNOWNS};

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::error::{argument, dimension, LfmError, Result};

pub type DenseMatrix = DMatrix<f64>;

/// Eigenvalue real part at or above which a matrix is not treated as Hurwitz.
pub const HURWITZ_TOL: f64 = -1e-12;

/// Symmetric positive semidefinite matrix.
///
/// Construction through [`SymmetricPsdMatrix::new`] checks symmetry to
/// `1e-10 (1 + max|P|)` and that every eigenvalue is at least
/// `-1e-9 * max|λ|`. Hot paths (filter recursions) use
/// [`SymmetricPsdMatrix::symmetrized`], which only enforces symmetry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetricPsdMatrix(DMatrix<f64>);

impl SymmetricPsdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m, "symmetric PSD matrix")?;
        check_finite(&m, "symmetric PSD matrix")?;
        let scale = 1.0 + m.amax();
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(LfmError::Invariant(format!(
                "matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let s = Self::symmetrized(m);
        let (min, max_abs) = s.eigen_range();
        if min < -1e-9 * max_abs.max(f64::MIN_POSITIVE) {
            return Err(LfmError::Invariant(format!(
                "matrix is not positive semidefinite (min eigenvalue {min:e})"
            )));
        }
        Ok(s)
    }

    /// Wraps `(m + mᵀ)/2` without the eigenvalue check.
    pub fn symmetrized(m: DMatrix<f64>) -> Self {
        Self(symmetrize(m))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Smallest eigenvalue and largest eigenvalue magnitude.
    pub fn eigen_range(&self) -> (f64, f64) {
        if self.0.is_empty() {
            return (0.0, 0.0);
        }
        let ev = self.0.clone().symmetric_eigenvalues();
        let min = ev.min();
        let max_abs = ev.amax();
        (min, max_abs)
    }

    /// True when the eigenvalue condition of [`SymmetricPsdMatrix::new`] holds.
    pub fn is_psd(&self) -> bool {
        let (min, max_abs) = self.eigen_range();
        min >= -1e-9 * max_abs.max(f64::MIN_POSITIVE)
    }
}

impl std::ops::Deref for SymmetricPsdMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

pub fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(argument(format!("{what} has non-finite entries")))
    }
}

pub fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(dimension(format!("{what} must be square, got {}x{}", m.nrows(), m.ncols())))
    }
}

/// Eigenvalues of a real square matrix (via a real Schur form).
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if a.is_empty() {
        return Vec::new();
    }
    match a.clone().try_schur(f64::EPSILON, 10_000) {
        Some(schur) => schur.complex_eigenvalues().iter().copied().collect(),
        None => {
            // Francis iteration failure is vanishingly rare; fall back to
            // the complex Schur path which uses different shifts.
            let ac = a.map(|v| Complex::new(v, 0.0));
            ac.schur().eigenvalues().map(|e| e.iter().copied().collect()).unwrap_or_default()
        }
    }
}

/// Largest real part over the spectrum (−∞ for an empty matrix).
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Fails with [`LfmError::NotHurwitz`] naming the offending eigenvalue.
pub fn ensure_hurwitz(a: &DMatrix<f64>) -> Result<()> {
    if let Some(e) = eigenvalues(a).into_iter().find(|e| e.re >= HURWITZ_TOL) {
        return Err(LfmError::NotHurwitz { re: e.re, im: e.im });
    }
    Ok(())
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Block-diagonal stacking of square or rectangular blocks.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}
