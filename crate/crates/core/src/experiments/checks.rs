use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::require;
use crate::error::Result;
use crate::gpss::{kernel_value, realize, CovarianceSpec};
use crate::model::{augment, build_heat_fourier, build_spring, HeatConfig, Rect};
use crate::systheory::{certify, CertificationReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelCheckConfig {
    pub spec: CovarianceSpec,
    /// Largest lag, in units of the length-scale.
    pub max_lag: f64,
    pub points: usize,
}

impl Default for KernelCheckConfig {
    fn default() -> Self {
        Self { spec: CovarianceSpec::squared_exponential(1.0, 1.0), max_lag: 3.0, points: 301 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelRow {
    pub tau: f64,
    pub k_exact: f64,
    pub k_statespace: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelCheckResult {
    pub spec: CovarianceSpec,
    pub state_dim: usize,
    pub rows: Vec<KernelRow>,
    /// Largest `|k_statespace − k_exact| / σ²` in the table.
    pub max_relative_error: f64,
}

/// Tabulates the realized covariance against the exact kernel on
/// `τ ∈ [0, max_lag·ℓ]`.
pub fn run_kernel_check(cfg: &KernelCheckConfig) -> Result<KernelCheckResult> {
    require(cfg.points >= 2 && cfg.max_lag > 0.0, || "kernel table needs at least two points and a positive range".into())?;
    let r = realize(&cfg.spec)?;
    let var = cfg.spec.sigma * cfg.spec.sigma;
    let top = cfg.max_lag * cfg.spec.ell;
    let rows: Vec<KernelRow> = (0..cfg.points)
        .map(|i| {
            let tau = top * i as f64 / (cfg.points - 1) as f64;
            let k_exact = cfg.spec.exact_kernel(tau);
            let k_statespace = kernel_value(&r, tau);
            KernelRow { tau, k_exact, k_statespace, error: k_statespace - k_exact }
        })
        .collect();
    let max_relative_error = rows.iter().map(|r| r.error.abs() / var).fold(0.0, f64::max);
    Ok(KernelCheckResult { spec: cfg.spec, state_dim: r.state_dim(), rows, max_relative_error })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertifyModel {
    Spring,
    Heat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyConfig {
    pub model: CertifyModel,
    /// When false the force does not enter the plant (`Bf = 0`).
    pub coupled: bool,
    pub force: CovarianceSpec,
    pub dt: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub diffusivity: f64,
    pub decay: f64,
    pub modes_per_axis: usize,
    pub sensors_per_axis: usize,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            model: CertifyModel::Spring,
            coupled: true,
            force: CovarianceSpec::matern_half(1.0, 2.0),
            dt: 0.01,
            lambda: 0.1,
            gamma: 1.0,
            diffusivity: 0.001,
            decay: 0.2,
            modes_per_axis: 2,
            sensors_per_axis: 3,
        }
    }
}

/// Builds the configured augmented model and certifies it.
pub fn run_certify(cfg: &CertifyConfig) -> Result<CertificationReport> {
    require(cfg.dt > 0.0, || "sampling interval must be positive".into())?;
    let mut phys = match cfg.model {
        CertifyModel::Spring => build_spring(cfg.lambda, cfg.gamma)?,
        CertifyModel::Heat => build_heat_fourier(&HeatConfig {
            diffusivity: cfg.diffusivity,
            decay: cfg.decay,
            modes_per_axis: cfg.modes_per_axis,
            domain: Rect::UNIT,
            sensors: HeatConfig::interior_grid(Rect::UNIT, cfg.sensors_per_axis),
            space_ell: 0.1,
        })?,
    };
    if !cfg.coupled {
        phys.bf = DMatrix::zeros(phys.bf.nrows(), phys.bf.ncols());
    }
    let force = realize(&cfg.force)?;
    let aug = augment(&phys, &vec![force; phys.n_forces()])?;
    certify(&aug, &aug.c, cfg.dt)
}
