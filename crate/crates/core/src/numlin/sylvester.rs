//! Lyapunov and Sylvester equation solvers.
//!
//! Small problems are solved by Kronecker vectorization; larger ones by a
//! Bartels–Stewart sweep over complex Schur forms.

use nalgebra::{Complex, DMatrix};

use super::{check_finite, check_square, eigenvalues, ensure_hurwitz, SymmetricPsdMatrix};
use crate::error::{dimension, LfmError, Result};

/// Largest unknown count (`n·m`) solved through the dense Kronecker system.
pub const KRONECKER_MAX_UNKNOWNS: usize = 256;

const OVERLAP_TOL: f64 = 1e-10;

/// Solves `A X − X B = C` for `X` (n×m).
///
/// Fails with [`LfmError::SpectrumOverlap`] when some eigenvalue of `A`
/// coincides with one of `B` to within `1e-10 (1 + |λ|)`.
pub fn solve_sylvester(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(a, "Sylvester left operator")?;
    check_square(b, "Sylvester right operator")?;
    let (n, m) = (a.nrows(), b.nrows());
    if c.nrows() != n || c.ncols() != m {
        return Err(dimension(format!(
            "right-hand side is {}x{}, expected {n}x{m}",
            c.nrows(),
            c.ncols()
        )));
    }
    check_finite(a, "Sylvester left operator")?;
    check_finite(b, "Sylvester right operator")?;
    check_finite(c, "Sylvester right-hand side")?;
    if n == 0 || m == 0 {
        return Ok(DMatrix::zeros(n, m));
    }
    check_spectra_disjoint(a, b)?;
    if n * m <= KRONECKER_MAX_UNKNOWNS {
        solve_sylvester_kronecker(a, b, c)
    } else {
        bartels_stewart(a, b, c)
    }
}

fn check_spectra_disjoint(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    let ea = eigenvalues(a);
    let eb = eigenvalues(b);
    for la in &ea {
        for mb in &eb {
            let scale = 1.0 + la.norm().max(mb.norm());
            if (la - mb).norm() <= OVERLAP_TOL * scale {
                return Err(LfmError::SpectrumOverlap {
                    lhs_re: la.re,
                    lhs_im: la.im,
                    rhs_re: mb.re,
                    rhs_im: mb.im,
                });
            }
        }
    }
    Ok(())
}

/// Dense solve of `(I ⊗ A − Bᵀ ⊗ I) vec(X) = vec(C)` (column-major `vec`).
pub fn solve_sylvester_kronecker(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (n, m) = (a.nrows(), b.nrows());
    let mut op = DMatrix::<f64>::zeros(n * m, n * m);
    for j in 0..m {
        op.view_mut((j * n, j * n), (n, n)).copy_from(a);
        for k in 0..m {
            let bkj = b[(k, j)];
            if bkj != 0.0 {
                for i in 0..n {
                    op[(j * n + i, k * n + i)] -= bkj;
                }
            }
        }
    }
    let rhs = DMatrix::from_column_slice(n * m, 1, c.as_slice());
    let sol = op.lu().solve(&rhs).ok_or_else(|| {
        LfmError::Conditioning("Kronecker-vectorized Sylvester operator is singular".into())
    })?;
    Ok(DMatrix::from_column_slice(n, m, sol.as_slice()))
}

fn to_complex(a: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    a.map(|v| Complex::new(v, 0.0))
}

fn bartels_stewart(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (qa, ta) = to_complex(a).schur().unpack();
    let (qb, tb) = to_complex(b).schur().unpack();
    let (n, m) = (a.nrows(), b.nrows());
    // T_A Y − Y T_B = Q_Aᴴ C Q_B, T_B upper triangular: sweep columns left to right.
    let f = qa.adjoint() * to_complex(c) * &qb;
    let mut y = DMatrix::<Complex<f64>>::zeros(n, m);
    for j in 0..m {
        let mut rhs = f.column(j).into_owned();
        for k in 0..j {
            let s = tb[(k, j)];
            if s != Complex::new(0.0, 0.0) {
                rhs += y.column(k) * s;
            }
        }
        let shift = tb[(j, j)];
        // Back substitution with (T_A − shift I), upper triangular.
        for i in (0..n).rev() {
            let mut acc = rhs[i];
            for l in (i + 1)..n {
                acc -= ta[(i, l)] * y[(l, j)];
            }
            let d = ta[(i, i)] - shift;
            if d.norm() <= OVERLAP_TOL * (1.0 + shift.norm()) {
                return Err(LfmError::SpectrumOverlap {
                    lhs_re: ta[(i, i)].re,
                    lhs_im: ta[(i, i)].im,
                    rhs_re: shift.re,
                    rhs_im: shift.im,
                });
            }
            y[(i, j)] = acc / d;
        }
    }
    let x = qa * y * qb.adjoint();
    Ok(x.map(|v| v.re))
}

/// Solves `F P + P Fᵀ + Q = 0` for Hurwitz `F`.
pub fn solve_lyapunov(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<SymmetricPsdMatrix> {
    check_square(f, "Lyapunov drift")?;
    check_square(q, "Lyapunov source")?;
    if f.nrows() != q.nrows() {
        return Err(dimension(format!(
            "drift is {0}x{0} but source is {1}x{1}",
            f.nrows(),
            q.nrows()
        )));
    }
    check_finite(f, "Lyapunov drift")?;
    ensure_hurwitz(f)?;
    let p = solve_sylvester(f, &(-f.transpose()), &(-q))?;
    Ok(SymmetricPsdMatrix::symmetrized(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn scalar_lyapunov() {
        let p = solve_lyapunov(&dmatrix![-1.0], &dmatrix![2.0]).unwrap();
        assert_relative_eq!(p[(0, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn identity_lyapunov() {
        let p = solve_lyapunov(&(-DMatrix::identity(3, 3)), &DMatrix::identity(3, 3)).unwrap();
        assert_relative_eq!(*p.as_matrix(), DMatrix::identity(3, 3) * 0.5, epsilon = 1e-14);
    }

    #[test]
    fn lyapunov_rejects_unstable_drift() {
        let err = solve_lyapunov(&dmatrix![0.5], &dmatrix![1.0]).unwrap_err();
        assert!(matches!(err, LfmError::NotHurwitz { .. }));
        let err = solve_lyapunov(&dmatrix![0.0], &dmatrix![1.0]).unwrap_err();
        assert!(matches!(err, LfmError::NotHurwitz { .. }));
    }

    #[test]
    fn scalar_sylvester() {
        let x = solve_sylvester(&dmatrix![2.0], &dmatrix![1.0], &dmatrix![3.0]).unwrap();
        assert_relative_eq!(x[(0, 0)], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let i = DMatrix::<f64>::identity(2, 2);
        let x = solve_sylvester(&i, &(-&i), &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(x, DMatrix::zeros(2, 2));
    }

    #[test]
    fn overlapping_spectra_are_reported() {
        let err = solve_sylvester(&dmatrix![1.0, 0.0; 0.0, 3.0], &dmatrix![3.0], &dmatrix![1.0; 1.0])
            .unwrap_err();
        match err {
            LfmError::SpectrumOverlap { lhs_re, rhs_re, .. } => {
                assert_relative_eq!(lhs_re, 3.0, epsilon = 1e-12);
                assert_relative_eq!(rhs_re, 3.0, epsilon = 1e-12);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn schur_path_matches_kronecker_path() {
        let n = 20;
        let m = 15;
        let a = DMatrix::from_fn(n, n, |i, j| {
            let v = ((i * 7 + j * 13) % 11) as f64 / 11.0 - 0.5;
            if i == j { v - 3.0 } else { v * 0.4 }
        });
        let b = DMatrix::from_fn(m, m, |i, j| {
            let v = ((i * 5 + j * 3) % 7) as f64 / 7.0 - 0.5;
            if i == j { v + 3.0 } else { v * 0.4 }
        });
        let c = DMatrix::from_fn(n, m, |i, j| ((i + 2 * j) % 5) as f64 - 2.0);
        assert!(n * m > KRONECKER_MAX_UNKNOWNS);
        let bs = solve_sylvester(&a, &b, &c).unwrap();
        let kr = solve_sylvester_kronecker(&a, &b, &c).unwrap();
        assert_relative_eq!(bs, kr, epsilon = 1e-10);
        let resid = (&a * &bs - &bs * &b - &c).norm();
        assert!(resid <= 1e-9 * (1.0 + c.norm()), "residual {resid}");
    }
}
