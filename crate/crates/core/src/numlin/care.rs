//! Continuous-time algebraic Riccati equation
//! `−AᵀP − PA + P M U⁻¹ Mᵀ P − X = 0`.
//!
//! The stabilizing solution is reached by integrating the Riccati
//! differential equation backward in time from `P = X` (globally convergent
//! for stabilizable/detectable data), then polished with Newton–Kleinman
//! steps, each of which is a Lyapunov solve.

use nalgebra::DMatrix;

use super::{check_finite, check_square, solve_lyapunov, spectral_abscissa, SymmetricPsdMatrix};
use crate::error::{argument, dimension, LfmError, Result};
use crate::systheory::pbh_stabilizability;

#[derive(Debug, Clone)]
pub struct CareOptions {
    /// Stop the backward integration once `‖dP/dt‖_F` falls below this.
    pub ode_tol: f64,
    /// Maximum number of RK4 steps.
    pub max_ode_steps: usize,
    /// Residual target `‖R(P)‖_F ≤ tol (1 + ‖X‖_F)`, relaxed to the normwise
    /// `tol (1 + ‖X‖_F + 2‖A‖_F‖P‖_F + ‖S‖_F‖P‖_F²)` when Newton stalls.
    pub residual_tol: f64,
    pub max_newton_steps: usize,
}

impl Default for CareOptions {
    fn default() -> Self {
        Self {
            ode_tol: 1e-6,
            max_ode_steps: 500_000,
            residual_tol: 1e-8,
            max_newton_steps: 50,
        }
    }
}

/// RK4 step size used for Riccati differential equations with drift `a`.
pub(crate) fn riccati_step(a: &DMatrix<f64>) -> f64 {
    let norm = a.norm();
    if norm > 0.0 {
        (0.1 / norm).min(0.01)
    } else {
        0.01
    }
}

/// `AᵀP + PA − P S P + X`, i.e. `−dP/dt` of the Riccati differential equation.
pub(crate) fn riccati_rhs(
    a: &DMatrix<f64>,
    s: &DMatrix<f64>,
    x: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    let pa = p * a;
    let mut out = pa.transpose() + pa;
    out -= p * s * p;
    out += x;
    out
}

pub(crate) fn rk4_backward_step(
    a: &DMatrix<f64>,
    s: &DMatrix<f64>,
    x: &DMatrix<f64>,
    p: &DMatrix<f64>,
    h: f64,
) -> DMatrix<f64> {
    let k1 = riccati_rhs(a, s, x, p);
    let k2 = riccati_rhs(a, s, x, &(p + &k1 * (0.5 * h)));
    let k3 = riccati_rhs(a, s, x, &(p + &k2 * (0.5 * h)));
    let k4 = riccati_rhs(a, s, x, &(p + &k3 * h));
    let mut next = p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    next = super::symmetrize(next);
    next
}

/// Stabilizing solution of the CARE with control weight inverse `uinv` and
/// state weight `x`.
pub fn solve_care(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
    uinv: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<SymmetricPsdMatrix> {
    solve_care_with(a, m, uinv, x, &CareOptions::default())
}

pub fn solve_care_with(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
    uinv: &DMatrix<f64>,
    x: &DMatrix<f64>,
    opts: &CareOptions,
) -> Result<SymmetricPsdMatrix> {
    check_square(a, "CARE drift")?;
    check_square(uinv, "inverse control weight")?;
    check_square(x, "state weight")?;
    let n = a.nrows();
    if m.nrows() != n || m.ncols() != uinv.nrows() || x.nrows() != n {
        return Err(dimension(format!(
            "CARE expects A {n}x{n}, M {n}x{}, U⁻¹ {}x{}, X {n}x{n}; got M {}x{}, X {}x{}",
            uinv.nrows(),
            uinv.nrows(),
            uinv.nrows(),
            m.nrows(),
            m.ncols(),
            x.nrows(),
            x.ncols()
        )));
    }
    for (mat, name) in [(a, "CARE drift"), (m, "control matrix"), (uinv, "U⁻¹"), (x, "state weight")] {
        check_finite(mat, name)?;
    }
    if uinv.nrows() > 0 && uinv.clone().cholesky().is_none() {
        return Err(argument("inverse control weight must be symmetric positive definite"));
    }
    SymmetricPsdMatrix::new(x.clone())?;
    if n == 0 {
        return Ok(SymmetricPsdMatrix::zeros(0));
    }
    let verdict = pbh_stabilizability(a, m);
    if let Some(w) = verdict.failures.first() {
        return Err(LfmError::NotStabilizable { re: w.re, im: w.im });
    }

    let s = m * uinv * m.transpose();
    let h = riccati_step(a);
    let mut p = x.clone();
    let mut steps = 0;
    loop {
        let rate = riccati_rhs(a, &s, x, &p).norm();
        if !rate.is_finite() {
            return Err(LfmError::Convergence { residual: rate });
        }
        if rate <= opts.ode_tol || steps >= opts.max_ode_steps {
            break;
        }
        p = rk4_backward_step(a, &s, x, &p, h);
        steps += 1;
    }

    // Newton runs to `tol (1 + ‖X‖)`; once it stalls at the rounding floor the
    // normwise relative residual decides.
    let strict = opts.residual_tol * (1.0 + x.norm());
    let (a_norm, s_norm) = (a.norm(), s.norm());
    let normwise = |p: &DMatrix<f64>| {
        let pn = p.norm();
        strict + opts.residual_tol * (2.0 * a_norm * pn + s_norm * pn * pn)
    };
    let mut residual = riccati_rhs(a, &s, x, &p).norm();
    for _ in 0..opts.max_newton_steps {
        let closed = a - &s * &p;
        let stable = spectral_abscissa(&closed) < 0.0;
        if residual <= strict && stable {
            return Ok(SymmetricPsdMatrix::symmetrized(p));
        }
        if !stable {
            return Err(LfmError::Convergence { residual });
        }
        let source = x + &p * &s * &p;
        let next = solve_lyapunov(&closed.transpose(), &source)?.into_inner();
        let next_residual = riccati_rhs(a, &s, x, &next).norm();
        if next_residual >= residual && residual <= normwise(&p) * 1e2 {
            break;
        }
        p = next;
        residual = next_residual;
    }
    let closed = a - &s * &p;
    if residual <= normwise(&p) && spectral_abscissa(&closed) < 0.0 {
        Ok(SymmetricPsdMatrix::symmetrized(p))
    } else {
        Err(LfmError::Convergence { residual })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn residual(a: &DMatrix<f64>, m: &DMatrix<f64>, uinv: &DMatrix<f64>, x: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
        let s = m * uinv * m.transpose();
        (-a.transpose() * p - p * a + p * s * p - x).norm()
    }

    #[test]
    fn integrator_plant() {
        let one = dmatrix![1.0];
        let p = solve_care(&dmatrix![0.0], &one, &one, &one).unwrap();
        assert_relative_eq!(p[(0, 0)], 1.0, epsilon = 1e-10);
        let closed = 0.0 - p[(0, 0)];
        assert_relative_eq!(closed, -1.0, epsilon = 1e-10);
    }

    #[test]
    fn unstable_scalar_plant() {
        let one = dmatrix![1.0];
        let p = solve_care(&one, &one, &one, &one).unwrap();
        assert_relative_eq!(p[(0, 0)], 1.0 + 2f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn spring_position_penalty() {
        let a = dmatrix![0.0, 1.0; -1.0, -0.1];
        let m = dmatrix![0.0; 1.0];
        let x = dmatrix![1.0, 0.0; 0.0, 0.0];
        let uinv = dmatrix![1.0];
        let p = solve_care(&a, &m, &uinv, &x).unwrap();
        assert!(residual(&a, &m, &uinv, &x, &p) <= 1e-8 * (1.0 + x.norm()));
        assert!(p.is_psd());
        let closed = &a - &m * &uinv * m.transpose() * p.as_matrix();
        assert!(spectral_abscissa(&closed) < 0.0);
    }

    #[test]
    fn unstabilizable_pair_is_rejected() {
        // second state is unstable and untouched by the input
        let a = dmatrix![-1.0, 0.0; 0.0, 1.0];
        let m = dmatrix![1.0; 0.0];
        let err = solve_care(&a, &m, &dmatrix![1.0], &DMatrix::identity(2, 2)).unwrap_err();
        match err {
            LfmError::NotStabilizable { re, .. } => assert_relative_eq!(re, 1.0, epsilon = 1e-10),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_indefinite_control_weight() {
        let one = dmatrix![1.0];
        assert!(solve_care(&one, &one, &dmatrix![-1.0], &one).is_err());
    }
}
