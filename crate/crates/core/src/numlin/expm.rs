use nalgebra::DMatrix;

use super::{check_finite, check_square, symmetrize, SymmetricPsdMatrix};
use crate::error::{argument, dimension, Result};

const PADE_ORDER: usize = 6;

/// Diagonal Padé [6/6] coefficients of `exp`, `c_k = (2p-k)! p! / ((2p)! k! (p-k)!)`.
fn pade_coefficients() -> [f64; PADE_ORDER + 1] {
    let mut c = [0.0; PADE_ORDER + 1];
    c[0] = 1.0;
    let p = PADE_ORDER as f64;
    for k in 1..=PADE_ORDER {
        let kf = k as f64;
        c[k] = c[k - 1] * (p - kf + 1.0) / (kf * (2.0 * p - kf + 1.0));
    }
    c
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a [6/6] Padé approximant.
///
/// The squaring count is chosen so the scaled 1-norm is at most 0.5, where
/// the truncation error of the approximant is below double precision.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(a, "expm argument")?;
    check_finite(a, "expm argument")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let norm = one_norm(a);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);

    let c = pade_coefficients();
    let ident = DMatrix::<f64>::identity(n, n);
    // Horner-free accumulation of the even and odd parts.
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let even = &ident * c[0] + &a2 * c[2] + &a4 * c[4] + &a6 * c[6];
    let odd_inner = &ident * c[1] + &a2 * c[3] + &a4 * c[5];
    let odd = &scaled * odd_inner;
    let numer = &even + &odd;
    let denom = &even - &odd;
    let mut result = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| argument("Padé denominator is singular"))?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// Exact discretization of `dx = A x dt + L dβ` with `E[dβ dβᵀ] = q dt`.
///
/// Returns `(Ad, Qd)` where `Ad = e^{A dt}` and
/// `Qd = ∫₀^dt e^{As} L q Lᵀ e^{Aᵀs} ds`, both read off one exponential of
/// the block matrix `[[A, L q Lᵀ], [0, -Aᵀ]] dt`.
pub fn van_loan_discretize(
    a: &DMatrix<f64>,
    l: &DMatrix<f64>,
    q: &DMatrix<f64>,
    dt: f64,
) -> Result<(DMatrix<f64>, SymmetricPsdMatrix)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(argument(format!("time step must be positive, got {dt}")));
    }
    check_square(a, "drift matrix")?;
    check_square(q, "spectral density")?;
    let n = a.nrows();
    if l.nrows() != n || l.ncols() != q.nrows() {
        return Err(dimension(format!(
            "noise gain is {}x{}, expected {}x{}",
            l.nrows(),
            l.ncols(),
            n,
            q.nrows()
        )));
    }
    let lql = l * q * l.transpose();
    let mut block = DMatrix::<f64>::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    block.view_mut((0, n), (n, n)).copy_from(&(lql * dt));
    block.view_mut((n, n), (n, n)).copy_from(&(-a.transpose() * dt));
    let e = expm(&block)?;
    let ad = e.view((0, 0), (n, n)).into_owned();
    let qd = e.view((0, n), (n, n)) * ad.transpose();
    Ok((ad, SymmetricPsdMatrix::symmetrized(symmetrize(qd))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn zero_matrix_gives_identity() {
        let e = expm(&DMatrix::zeros(2, 2)).unwrap();
        assert_relative_eq!(e, DMatrix::identity(2, 2), epsilon = 1e-15);
    }

    #[test]
    fn nilpotent_closed_form() {
        let e = expm(&dmatrix![0.0, 1.0; 0.0, 0.0]).unwrap();
        assert_relative_eq!(e, dmatrix![1.0, 1.0; 0.0, 1.0], epsilon = 1e-14);
    }

    #[test]
    fn diagonal_closed_form() {
        let e = expm(&dmatrix![-1.0, 0.0; 0.0, 2.0]).unwrap();
        assert_relative_eq!(e[(0, 0)], (-1f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(e[(1, 1)], 2f64.exp(), max_relative = 1e-13);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn block_triangular_structure_is_kept() {
        let a = dmatrix![-1.0, 2.0, 0.3; 0.5, -0.2, 1.0; 0.0, 0.0, -3.0];
        let e = expm(&a).unwrap();
        assert_eq!(e[(2, 0)], 0.0);
        assert_eq!(e[(2, 1)], 0.0);
    }

    #[test]
    fn rejects_non_square() {
        assert!(expm(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn van_loan_constant_integrand() {
        let (ad, qd) = van_loan_discretize(
            &dmatrix![0.0],
            &dmatrix![1.0],
            &dmatrix![2.0],
            0.5,
        )
        .unwrap();
        assert_relative_eq!(ad[(0, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(qd[(0, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn van_loan_scalar_closed_form() {
        let (ad, qd) = van_loan_discretize(
            &dmatrix![-1.0],
            &dmatrix![1.0],
            &dmatrix![2.0],
            1.0,
        )
        .unwrap();
        assert_relative_eq!(ad[(0, 0)], (-1f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(qd[(0, 0)], 1.0 - (-2f64).exp(), max_relative = 1e-13);
    }

    #[test]
    fn van_loan_rejects_nonpositive_step() {
        let one = dmatrix![1.0];
        assert!(van_loan_discretize(&one, &one, &one, 0.0).is_err());
        assert!(van_loan_discretize(&one, &one, &one, -1.0).is_err());
    }
}
