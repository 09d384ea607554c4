use nalgebra::DMatrix;
use serde::Serialize;

use super::kalman::filter_log_likelihood;
use super::{GaussianBelief, MeasurementModel, TimeSeriesData, DEFAULT_PHYSICAL_PRIOR_VAR};
use crate::error::{LfmError, Result};
use crate::gpss::{realize, CovarianceSpec};
use crate::model::{augment, AugmentedLfm, LtiPhysicalSystem};

/// Builds the model implied by `spec` (one GP per force channel of `phys`,
/// or a bare GP observed directly when `phys` is `None`).
pub(crate) fn model_for(
    spec: &CovarianceSpec,
    phys: Option<&LtiPhysicalSystem>,
    noise_cov: &DMatrix<f64>,
) -> Result<(AugmentedLfm, MeasurementModel)> {
    let force = realize(spec)?;
    match phys {
        Some(phys) => {
            let aug = augment(phys, &vec![force; phys.n_forces()])?;
            let meas = MeasurementModel::new(aug.c.clone(), noise_cov.clone())?;
            Ok((aug, meas))
        }
        None => {
            let meas = MeasurementModel::new(force.h.clone(), noise_cov.clone())?;
            Ok((AugmentedLfm::latent_only(&force), meas))
        }
    }
}

/// Sum of innovation log-densities from the stationary prior
/// `N(0, blockdiag(100·I, P∞))` at the first sample time.
pub fn log_marginal_likelihood(
    data: &TimeSeriesData,
    spec: &CovarianceSpec,
    phys: Option<&LtiPhysicalSystem>,
    noise_cov: &DMatrix<f64>,
) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let (aug, meas) = model_for(spec, phys, noise_cov)?;
    let prior = GaussianBelief::stationary_prior(&aug, DEFAULT_PHYSICAL_PRIOR_VAR);
    filter_log_likelihood(&aug, &meas, data, &prior)
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Explicit `(σ₀, ℓ₀)` starting points; derived from the data when empty.
    pub starts: Vec<(f64, f64)>,
    /// Simplex diameter in log-parameter space at which a start stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { starts: Vec::new(), tol: 1e-4, max_iter: 400 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StartReport {
    pub sigma0: f64,
    pub ell0: f64,
    pub initial_log_likelihood: f64,
    pub final_log_likelihood: f64,
    pub sigma: f64,
    pub ell: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub spec: CovarianceSpec,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub starts: Vec<StartReport>,
}

/// Default multi-start points: `σ₀` from the data spread and
/// `ℓ₀ ∈ {span/20, span/5, span/2}`.
pub fn default_starts(data: &TimeSeriesData) -> Vec<(f64, f64)> {
    let sigma0 = match data.observed_std() {
        s if s > 0.0 && s.is_finite() => s,
        _ => 1.0,
    };
    let span = if data.span() > 0.0 { data.span() } else { 1.0 };
    [20.0, 5.0, 2.0].iter().map(|d| (sigma0, span / d)).collect()
}

/// Longest admissible length scale, as a multiple of the data span. Beyond it
/// the force is indistinguishable from a constant and the latent dynamics lose
/// numerical stability.
pub const MAX_ELL_SPANS: f64 = 10.0;

/// Maximizes the marginal likelihood over `(log σ, log ℓ)` with Nelder–Mead
/// from several starts, with `ℓ ≤ MAX_ELL_SPANS · span`.
pub fn fit_hyperparameters(
    data: &TimeSeriesData,
    template: &CovarianceSpec,
    phys: Option<&LtiPhysicalSystem>,
    noise_cov: &DMatrix<f64>,
    opts: &FitOptions,
) -> Result<FitResult> {
    if data.is_empty() {
        return Err(LfmError::Optimization("no data to fit".into()));
    }
    let starts = if opts.starts.is_empty() { default_starts(data) } else { opts.starts.clone() };
    let max_log_ell = (MAX_ELL_SPANS * if data.span() > 0.0 { data.span() } else { 1.0 }).ln();
    let mut evaluations = 0;
    let mut objective = |x: &[f64]| -> f64 {
        evaluations += 1;
        if x[1] > max_log_ell {
            return f64::INFINITY;
        }
        let spec = template.with_params(x[0].exp(), x[1].exp());
        match log_marginal_likelihood(data, &spec, phys, noise_cov) {
            Ok(ll) if ll.is_finite() => -ll,
            _ => f64::INFINITY,
        }
    };
    let mut reports = Vec::new();
    let mut best: Option<(f64, [f64; 2])> = None;
    let mut iterations = 0;
    for &(s0, l0) in &starts {
        let x0 = [s0.ln(), l0.ln()];
        let initial = -objective(&x0);
        let res = nelder_mead(&mut objective, &x0, 0.5, opts.tol, opts.max_iter);
        iterations += res.iterations;
        let ll = -res.value;
        reports.push(StartReport {
            sigma0: s0,
            ell0: l0,
            initial_log_likelihood: initial,
            final_log_likelihood: ll,
            sigma: res.x[0].exp(),
            ell: res.x[1].exp(),
            iterations: res.iterations,
        });
        if ll.is_finite() && best.is_none_or(|(b, _)| ll > b) {
            best = Some((ll, [res.x[0], res.x[1]]));
        }
    }
    let (ll, x) = best.ok_or_else(|| {
        LfmError::Optimization(format!("no start produced a finite likelihood: {reports:?}"))
    })?;
    Ok(FitResult {
        spec: template.with_params(x[0].exp(), x[1].exp()),
        log_likelihood: ll,
        iterations,
        evaluations,
        starts: reports,
    })
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0` with an initial simplex of edge `step`; stops when
/// every vertex is within `tol` of the best one.
pub fn nelder_mead<F>(f: &mut F, x0: &[f64], step: f64, tol: f64, max_iter: usize) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut iterations = 0;
    let mut converged = false;
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };
    while iterations < max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter <= tol {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
        let worst = simplex[n].clone();
        let reflected = lerp(&centroid, &worst, -1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = lerp(&centroid, &worst, -2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let (contracted, fc) = if fr < values[n] {
                let c = lerp(&centroid, &reflected, 0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = lerp(&centroid, &worst, 0.5);
                let fc = f(&c);
                (c, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = lerp(&simplex[0], &simplex[i], 0.5);
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    NelderMeadResult { x: simplex[best].clone(), value: values[best], iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;
    use std::f64::consts::PI;

    #[test]
    fn nelder_mead_rosenbrock() {
        let mut f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(&mut f, &[-1.2, 1.0], 0.5, 1e-8, 5000);
        assert!(r.converged);
        assert_relative_eq!(r.x[0], 1.0, epsilon = 1e-5);
        assert_relative_eq!(r.x[1], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn empty_data_has_zero_likelihood() {
        let data = TimeSeriesData::new(vec![], vec![], None).unwrap();
        let ll = log_marginal_likelihood(&data, &CovarianceSpec::matern_half(1.0, 1.0), None, &dmatrix![1.0]).unwrap();
        assert_eq!(ll, 0.0);
    }

    #[test]
    fn single_latent_observation() {
        let data = TimeSeriesData::scalar(vec![0.0], &[1.0]).unwrap();
        let ll = log_marginal_likelihood(&data, &CovarianceSpec::matern_half(1.0, 3.0), None, &dmatrix![1.0]).unwrap();
        assert_relative_eq!(ll, -0.5 * (4.0 * PI).ln() - 0.25, epsilon = 1e-13);
    }

    #[test]
    fn fit_requires_data() {
        let data = TimeSeriesData::new(vec![], vec![], None).unwrap();
        let r = fit_hyperparameters(&data, &CovarianceSpec::matern_half(1.0, 1.0), None, &dmatrix![1.0], &FitOptions::default());
        assert!(matches!(r, Err(LfmError::Optimization(_))));
    }
}
