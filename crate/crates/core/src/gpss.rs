//! State-space realizations of stationary Gaussian-process covariances.
//!
//! Matérn kernels with half-integer smoothness have exact finite-dimensional
//! realizations. The squared-exponential kernel does not: its spectral
//! density is replaced by a Padé approximant in `ℓ²ω²/4`, whose stable
//! spectral factor gives a rational realization.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{argument, LfmError, Result};
use crate::numlin::{
    balance, eigenvalues, ensure_hurwitz, expm, solve_lyapunov, SymmetricPsdMatrix, HURWITZ_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceKind {
    SquaredExponential,
    MaternHalf,
    Matern32,
    Matern52,
}

impl std::str::FromStr for CovarianceKind {
    type Err = LfmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "squared-exponential" | "se" | "rbf" => Ok(Self::SquaredExponential),
            "matern-half" | "matern12" | "exponential" => Ok(Self::MaternHalf),
            "matern32" | "matern-32" => Ok(Self::Matern32),
            "matern52" | "matern-52" => Ok(Self::Matern52),
            other => Err(argument(format!("unknown covariance kind `{other}`"))),
        }
    }
}

/// Default Padé order `(numerator, denominator)` for the squared exponential.
pub const DEFAULT_SE_ORDER: (usize, usize) = (4, 8);

/// A stationary covariance `k(τ)` with amplitude `sigma` and length-scale `ell`.
///
/// The squared exponential is `σ² exp(−τ²/ℓ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub kind: CovarianceKind,
    pub sigma: f64,
    pub ell: f64,
    /// Padé order used only by [`CovarianceKind::SquaredExponential`].
    #[serde(default = "default_se_order")]
    pub se_order: (usize, usize),
}

fn default_se_order() -> (usize, usize) {
    DEFAULT_SE_ORDER
}

impl CovarianceSpec {
    pub fn new(kind: CovarianceKind, sigma: f64, ell: f64) -> Self {
        Self { kind, sigma, ell, se_order: DEFAULT_SE_ORDER }
    }

    pub fn squared_exponential(sigma: f64, ell: f64) -> Self {
        Self::new(CovarianceKind::SquaredExponential, sigma, ell)
    }

    pub fn matern_half(sigma: f64, ell: f64) -> Self {
        Self::new(CovarianceKind::MaternHalf, sigma, ell)
    }

    pub fn matern32(sigma: f64, ell: f64) -> Self {
        Self::new(CovarianceKind::Matern32, sigma, ell)
    }

    pub fn matern52(sigma: f64, ell: f64) -> Self {
        Self::new(CovarianceKind::Matern52, sigma, ell)
    }

    pub fn with_se_order(mut self, numerator: usize, denominator: usize) -> Self {
        self.se_order = (numerator, denominator);
        self
    }

    pub fn with_params(mut self, sigma: f64, ell: f64) -> Self {
        self.sigma = sigma;
        self.ell = ell;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(argument(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.ell > 0.0 && self.ell.is_finite()) {
            return Err(argument(format!("length-scale must be positive, got {}", self.ell)));
        }
        if self.kind == CovarianceKind::SquaredExponential && self.se_order.1 <= self.se_order.0 {
            return Err(argument(format!(
                "Padé denominator degree must exceed numerator degree, got {:?}",
                self.se_order
            )));
        }
        Ok(())
    }

    /// Closed-form covariance at lag `tau`.
    pub fn exact_kernel(&self, tau: f64) -> f64 {
        let r = tau.abs() / self.ell;
        let s2 = self.sigma * self.sigma;
        match self.kind {
            CovarianceKind::SquaredExponential => s2 * (-r * r).exp(),
            CovarianceKind::MaternHalf => s2 * (-r).exp(),
            CovarianceKind::Matern32 => {
                let a = 3f64.sqrt() * r;
                s2 * (1.0 + a) * (-a).exp()
            }
            CovarianceKind::Matern52 => {
                let a = 5f64.sqrt() * r;
                s2 * (1.0 + a + a * a / 3.0) * (-a).exp()
            }
        }
    }

    /// State dimension of the realization this spec produces.
    pub fn state_dim(&self) -> usize {
        match self.kind {
            CovarianceKind::MaternHalf => 1,
            CovarianceKind::Matern32 => 2,
            CovarianceKind::Matern52 => 3,
            CovarianceKind::SquaredExponential => self.se_order.1,
        }
    }
}

/// `dz = F z dt + L dβ`, `u = H z`, with white-noise spectral density `q` and
/// stationary covariance `pinf`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LtiGpRealization {
    pub f: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub q: f64,
    pub h: DMatrix<f64>,
    pub pinf: SymmetricPsdMatrix,
}

impl LtiGpRealization {
    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    /// `H P∞ Hᵀ`, the marginal variance of the realized process.
    pub fn variance(&self) -> f64 {
        (&self.h * self.pinf.as_matrix() * self.h.transpose())[(0, 0)]
    }

    /// Returns the same process with every variance multiplied by `factor`.
    pub fn scaled_variance(&self, factor: f64) -> Self {
        Self {
            f: self.f.clone(),
            l: self.l.clone(),
            q: self.q * factor,
            h: self.h.clone(),
            pinf: SymmetricPsdMatrix::symmetrized(self.pinf.as_matrix() * factor),
        }
    }

    /// Checks stability, the Lyapunov balance and the marginal variance.
    pub fn check_invariants(&self, expected_variance: f64, variance_tol: f64) -> Result<()> {
        ensure_hurwitz(&self.f)?;
        let lql = &self.l * self.q * self.l.transpose();
        let resid = (&self.f * self.pinf.as_matrix() + self.pinf.as_matrix() * self.f.transpose() + lql).norm();
        if resid > 1e-9 * (1.0 + self.q) * (1.0 + self.pinf.amax()) {
            return Err(LfmError::Invariant(format!("Lyapunov residual {resid:e} too large")));
        }
        let v = self.variance();
        if (v - expected_variance).abs() > variance_tol {
            return Err(LfmError::Invariant(format!(
                "realized variance {v} differs from {expected_variance}"
            )));
        }
        Ok(())
    }
}

/// Builds the state-space realization of `spec`.
pub fn realize(spec: &CovarianceSpec) -> Result<LtiGpRealization> {
    spec.validate()?;
    let s2 = spec.sigma * spec.sigma;
    let ell = spec.ell;
    let (f, q) = match spec.kind {
        CovarianceKind::MaternHalf => (DMatrix::from_element(1, 1, -1.0 / ell), 2.0 * s2 / ell),
        CovarianceKind::Matern32 => {
            let lam = 3f64.sqrt() / ell;
            let f = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -lam * lam, -2.0 * lam]);
            (f, 4.0 * lam.powi(3) * s2)
        }
        CovarianceKind::Matern52 => {
            let lam = 5f64.sqrt() / ell;
            let f = DMatrix::from_row_slice(
                3,
                3,
                &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -lam.powi(3), -3.0 * lam * lam, -3.0 * lam],
            );
            (f, 16.0 / 3.0 * s2 * lam.powi(5))
        }
        CovarianceKind::SquaredExponential => return realize_squared_exponential(spec),
    };
    let n = f.nrows();
    let mut l = DMatrix::zeros(n, 1);
    l[(n - 1, 0)] = 1.0;
    let mut h = DMatrix::zeros(1, n);
    h[(0, 0)] = 1.0;
    let pinf = solve_lyapunov(&f, &(&l * q * l.transpose()))?;
    Ok(LtiGpRealization { f, l, q, h, pinf })
}

/// Coefficients (ascending powers of `x`) of the Padé [m/n] approximant
/// `N(x)/D(x) ≈ exp(−x)`.
pub fn pade_exp_neg(m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    // P_{mn}(z) = Σ_j (m+n−j)! m! / ((m+n)! j! (m−j)!) z^j, and
    // exp(z) ≈ P_{mn}(z) / P_{nm}(−z). With z = −x:
    let coeffs = |m: usize, n: usize| {
        let mut c = vec![1.0; m + 1];
        for j in 1..=m {
            c[j] = c[j - 1] * (m - j + 1) as f64 / (j as f64 * (m + n - j + 1) as f64);
        }
        c
    };
    let num = coeffs(m, n)
        .into_iter()
        .enumerate()
        .map(|(j, c)| if j % 2 == 1 { -c } else { c })
        .collect();
    let den = coeffs(n, m);
    (num, den)
}

/// Roots of a polynomial given by ascending coefficients.
fn poly_roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let deg = coeffs.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = coeffs[deg];
    let mut comp = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -coeffs[i] / lead;
    }
    let eval = |z: Complex<f64>| {
        let mut p = Complex::new(0.0, 0.0);
        let mut dp = Complex::new(0.0, 0.0);
        for &c in coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    };
    eigenvalues(&comp)
        .into_iter()
        .map(|mut z| {
            for _ in 0..3 {
                let (p, dp) = eval(z);
                if dp.norm() == 0.0 {
                    break;
                }
                z -= p / dp;
            }
            z
        })
        .collect()
}

/// Monic real polynomial (ascending coefficients) with the given roots.
fn poly_from_roots(roots: &[Complex<f64>]) -> Vec<f64> {
    let mut c = vec![Complex::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex::new(0.0, 0.0); c.len() + 1];
        for (i, &ci) in c.iter().enumerate() {
            next[i + 1] += ci;
            next[i] -= ci * r;
        }
        c = next;
    }
    c.into_iter().map(|z| z.re).collect()
}

/// Left-half-plane square roots `s` of `s² = −w` for each root `w` in `ω²`.
fn stable_factor_roots(w_roots: &[Complex<f64>], what: &str) -> Result<Vec<Complex<f64>>> {
    w_roots
        .iter()
        .map(|w| {
            let s = -(-w).sqrt();
            if s.re >= HURWITZ_TOL {
                Err(LfmError::Factorization(format!(
                    "{what} root ω² = {w} maps onto the imaginary axis"
                )))
            } else {
                Ok(s)
            }
        })
        .collect()
}

fn realize_squared_exponential(spec: &CovarianceSpec) -> Result<LtiGpRealization> {
    let (m, n) = spec.se_order;
    let (num_x, den_x) = pade_exp_neg(m, n);
    // x = ℓ²ω²/4, so a root x_r in x is a root 4 x_r / ℓ² in ω².
    let to_w = 4.0 / (spec.ell * spec.ell);
    let w_num: Vec<_> = poly_roots(&num_x).into_iter().map(|x| x * to_w).collect();
    let w_den: Vec<_> = poly_roots(&den_x).into_iter().map(|x| x * to_w).collect();
    let zeros = stable_factor_roots(&w_num, "numerator")?;
    let poles = stable_factor_roots(&w_den, "denominator")?;
    let a = poly_from_roots(&poles);
    let b = poly_from_roots(&zeros);

    // Controllable companion form: H (sI − F)⁻¹ L = b(s)/a(s).
    let mut f = DMatrix::<f64>::zeros(n, n);
    for i in 0..n - 1 {
        f[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        f[(n - 1, j)] = -a[j];
    }
    let mut l = DMatrix::<f64>::zeros(n, 1);
    l[(n - 1, 0)] = 1.0;
    let mut h = DMatrix::<f64>::zeros(1, n);
    for (j, &bj) in b.iter().enumerate() {
        h[(0, j)] = bj;
    }

    // Diagonal similarity to tame the companion coefficients' dynamic range.
    let (fb, d) = balance(&f);
    let lb = DMatrix::from_fn(n, 1, |i, _| l[(i, 0)] / d[i]);
    let hb = DMatrix::from_fn(1, n, |_, j| h[(0, j)] * d[j]);
    ensure_hurwitz(&fb).map_err(|e| LfmError::Factorization(format!("unstable spectral factor: {e}")))?;

    let unit = solve_lyapunov(&fb, &(&lb * lb.transpose()))?;
    let unit_var = (&hb * unit.as_matrix() * hb.transpose())[(0, 0)];
    if !(unit_var > 0.0 && unit_var.is_finite()) {
        return Err(LfmError::Factorization(format!("degenerate realized variance {unit_var}")));
    }
    let q = spec.sigma * spec.sigma / unit_var;
    let pinf = SymmetricPsdMatrix::symmetrized(unit.into_inner() * q);
    Ok(LtiGpRealization { f: fb, l: lb, q, h: hb, pinf })
}

/// Stationary covariance of the realized process at lag `tau`:
/// `H exp(F|τ|) P∞ Hᵀ`.
pub fn kernel_value(r: &LtiGpRealization, tau: f64) -> f64 {
    let e = expm(&(&r.f * tau.abs())).expect("realization drift is square and finite");
    (&r.h * e * r.pinf.as_matrix() * r.h.transpose())[(0, 0)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn matern_half_closed_form() {
        let r = realize(&CovarianceSpec::matern_half(1.0, 2.0)).unwrap();
        assert_relative_eq!(r.f[(0, 0)], -0.5);
        assert_relative_eq!(r.q, 1.0);
        assert_relative_eq!(r.h[(0, 0)], 1.0);
        assert_relative_eq!(r.pinf[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(kernel_value(&r, 2.0), (-1f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn matern32_unit() {
        let r = realize(&CovarianceSpec::matern32(1.0, 1.0)).unwrap();
        assert_relative_eq!(r.f[(1, 0)], -3.0, epsilon = 1e-14);
        assert_relative_eq!(r.f[(1, 1)], -2.0 * 3f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(r.variance(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn squared_exponential_has_requested_dimension() {
        let r = realize(&CovarianceSpec::squared_exponential(1.0, 1.0)).unwrap();
        assert_eq!(r.state_dim(), 8);
        r.check_invariants(1.0, 1e-10).unwrap();
        assert!(kernel_value(&r, 10.0).abs() <= 0.02);
    }

    #[test]
    fn zero_lag_is_variance() {
        let r = realize(&CovarianceSpec::matern52(1.3, 0.7)).unwrap();
        assert_relative_eq!(kernel_value(&r, 0.0), r.variance(), epsilon = 1e-14);
        assert_relative_eq!(r.variance(), 1.69, epsilon = 1e-10);
    }

    #[test]
    fn kernel_is_symmetric_in_lag() {
        let r = realize(&CovarianceSpec::squared_exponential(1.0, 2.0)).unwrap();
        assert_eq!(kernel_value(&r, 1.3), kernel_value(&r, -1.3));
    }

    #[test]
    fn odd_numerator_is_a_factorization_error() {
        // [3/6] has a positive real root in ω², i.e. a negative spectral density.
        let spec = CovarianceSpec::squared_exponential(1.0, 1.0).with_se_order(3, 6);
        assert!(matches!(realize(&spec), Err(LfmError::Factorization(_))));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(realize(&CovarianceSpec::matern_half(0.0, 1.0)).is_err());
        assert!(realize(&CovarianceSpec::matern_half(1.0, -1.0)).is_err());
        let bad = CovarianceSpec::squared_exponential(1.0, 1.0).with_se_order(8, 4);
        assert!(matches!(realize(&bad), Err(LfmError::Argument(_))));
    }

    #[test]
    fn pade_matches_exponential_near_zero() {
        let (n, d) = pade_exp_neg(4, 8);
        let eval = |c: &[f64], x: f64| c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci);
        for &x in &[0.0, 0.1, 0.5, 1.0] {
            assert_relative_eq!(eval(&n, x) / eval(&d, x), (-x).exp(), max_relative = 1e-6);
        }
    }
}
