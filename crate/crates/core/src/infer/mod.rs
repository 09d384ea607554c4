//! Bayesian inference in the augmented model: exact discretization, Kalman
//! filtering, RTS smoothing, marginal likelihood and hyperparameter fitting.

mod data;
mod fit;
mod kalman;
mod smoother;

pub use data::TimeSeriesData;
pub use fit::{default_starts, fit_hyperparameters, log_marginal_likelihood, MAX_ELL_SPANS, nelder_mead, FitOptions, FitResult, NelderMeadResult, StartReport};
pub use kalman::{filter_log_likelihood, kf_step, predict, run_filter, update, FilterRun};
pub use smoother::{rts_smooth, smooth};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{argument, dimension, Result};
use crate::model::AugmentedLfm;
use crate::numlin::{expm, van_loan_discretize, SymmetricPsdMatrix};

/// Variance of each physical state in the default initial prior.
pub const DEFAULT_PHYSICAL_PRIOR_VAR: f64 = 100.0;

/// `y = C g + ε`, `ε ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementModel {
    pub c: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl MeasurementModel {
    pub fn new(c: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if r.nrows() != c.nrows() || !r.is_square() {
            return Err(dimension(format!(
                "noise covariance is {}x{} for {} outputs",
                r.nrows(),
                r.ncols(),
                c.nrows()
            )));
        }
        if (0..r.nrows()).any(|i| !(r[(i, i)] > 0.0)) {
            return Err(argument("measurement noise variances must be strictly positive"));
        }
        SymmetricPsdMatrix::new(r.clone())?;
        Ok(Self { c, r })
    }

    /// Isotropic noise with standard deviation `std` on every output.
    pub fn isotropic(c: DMatrix<f64>, std: f64) -> Result<Self> {
        let d = c.nrows();
        Self::new(c, DMatrix::identity(d, d) * (std * std))
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: SymmetricPsdMatrix,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: SymmetricPsdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(dimension(format!("mean has {} entries, covariance is {}", mean.len(), cov.dim())));
        }
        Ok(Self { mean, cov })
    }

    /// Zero-mean stationary prior `N(0, blockdiag(phys_var·I, P∞))`.
    pub fn stationary_prior(aug: &AugmentedLfm, phys_var: f64) -> Self {
        Self {
            mean: DVector::zeros(aug.dim()),
            cov: SymmetricPsdMatrix::symmetrized(aug.prior_covariance(phys_var)),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Marginal standard deviation of coordinate `i`.
    pub fn std(&self, i: usize) -> f64 {
        self.cov[(i, i)].max(0.0).sqrt()
    }
}

/// Exact discretization over one interval with zero-order-hold controls.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discretization {
    pub dt: f64,
    pub ad: DMatrix<f64>,
    pub qd: SymmetricPsdMatrix,
    pub md: DMatrix<f64>,
}

/// `Ad = e^{A dt}`, `Qd` by Van Loan, `Md = ∫₀^dt e^{As} ds · M`.
pub fn discretize(aug: &AugmentedLfm, dt: f64) -> Result<Discretization> {
    let (ad, qd) = van_loan_discretize(&aug.a, &aug.b, &aug.q, dt)?;
    let md = zoh_input_matrix(&aug.a, &aug.m, dt)?;
    Ok(Discretization { dt, ad, qd, md })
}

/// Top-right block of `exp([[A, M], [0, 0]] dt)`.
pub fn zoh_input_matrix(a: &DMatrix<f64>, m: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    let (n, k) = (a.nrows(), m.ncols());
    if k == 0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    let mut block = DMatrix::zeros(n + k, n + k);
    block.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    block.view_mut((0, n), (n, k)).copy_from(&(m * dt));
    Ok(expm(&block)?.view((0, n), (n, k)).into_owned())
}

/// Caches discretizations by step length.
#[derive(Debug, Clone)]
pub struct DiscretizationCache<'a> {
    aug: &'a AugmentedLfm,
    entries: Vec<Discretization>,
}

impl<'a> DiscretizationCache<'a> {
    pub fn new(aug: &'a AugmentedLfm) -> Self {
        Self { aug, entries: Vec::new() }
    }

    /// Index of the discretization for `dt` (steps equal to within
    /// `1e-12·max(1, dt)` share one entry).
    pub fn index_for(&mut self, dt: f64) -> Result<usize> {
        let tol = 1e-12 * dt.abs().max(1.0);
        if let Some(i) = self.entries.iter().position(|d| (d.dt - dt).abs() <= tol) {
            return Ok(i);
        }
        self.entries.push(discretize(self.aug, dt)?);
        Ok(self.entries.len() - 1)
    }

    pub fn get(&self, idx: usize) -> &Discretization {
        &self.entries[idx]
    }

    pub fn entries(&self) -> &[Discretization] {
        &self.entries
    }
}
