use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{Discretization, DiscretizationCache, GaussianBelief, MeasurementModel, TimeSeriesData};
use crate::error::{dimension, LfmError, Result};
use crate::model::AugmentedLfm;
use crate::numlin::SymmetricPsdMatrix;

/// Time update `m ← Ad m + Md c`, `P ← Ad P Adᵀ + Qd`.
pub fn predict(belief: &GaussianBelief, disc: &Discretization, control: Option<&DVector<f64>>) -> GaussianBelief {
    let mut mean = &disc.ad * &belief.mean;
    if let Some(c) = control {
        if !c.is_empty() {
            mean += &disc.md * c;
        }
    }
    let mut cov = &disc.ad * belief.cov.as_matrix() * disc.ad.transpose();
    cov += disc.qd.as_matrix();
    GaussianBelief { mean, cov: SymmetricPsdMatrix::symmetrized(cov) }
}

/// Measurement update in Joseph form; returns the posterior and
/// `log N(v; 0, S)` of the innovation.
pub fn update(belief: &GaussianBelief, meas: &MeasurementModel, y: &DVector<f64>) -> Result<(GaussianBelief, f64)> {
    let d = meas.n_outputs();
    if y.len() != d || meas.c.ncols() != belief.dim() {
        return Err(dimension(format!(
            "measurement of length {} against model with {d} outputs and {} states",
            y.len(),
            belief.dim()
        )));
    }
    let p = belief.cov.as_matrix();
    let v = y - &meas.c * &belief.mean;
    let pct = p * meas.c.transpose();
    let s = &meas.c * &pct + &meas.r;
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| LfmError::Conditioning("innovation covariance is not positive definite".into()))?;
    // K = P Cᵀ S⁻¹  ⇔  Kᵀ = S⁻¹ C P
    let gain = chol.solve(&pct.transpose()).transpose();
    let mean = &belief.mean + &gain * &v;
    let n = belief.dim();
    let ikc = DMatrix::<f64>::identity(n, n) - &gain * &meas.c;
    let cov = &ikc * p * ikc.transpose() + &gain * &meas.r * gain.transpose();

    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().take(d).map(|x| x.ln()).sum::<f64>();
    let alpha = chol.solve(&v);
    let quad = v.dot(&alpha);
    let loglik = -0.5 * (d as f64 * (2.0 * PI).ln() + log_det + quad);
    Ok((GaussianBelief { mean, cov: SymmetricPsdMatrix::symmetrized(cov) }, loglik))
}

/// One predict/update cycle. A missing measurement leaves the prediction in
/// place and contributes zero log-likelihood.
pub fn kf_step(
    belief: &GaussianBelief,
    disc: &Discretization,
    control: Option<&DVector<f64>>,
    meas: &MeasurementModel,
    y: Option<&DVector<f64>>,
) -> Result<(GaussianBelief, f64)> {
    let predicted = predict(belief, disc, control);
    match y {
        Some(y) => update(&predicted, meas, y),
        None => Ok((predicted, 0.0)),
    }
}

/// Filter output over a whole series.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub predicted: Vec<GaussianBelief>,
    pub filtered: Vec<GaussianBelief>,
    /// Transition matrices `Ad` from sample `k` to `k + 1`.
    pub transitions: Vec<DMatrix<f64>>,
    pub log_likelihood: f64,
}

/// Runs the filter over `data` starting from `prior`, which describes the
/// state at `data.times[0]`.
pub fn run_filter(
    aug: &AugmentedLfm,
    meas: &MeasurementModel,
    data: &TimeSeriesData,
    prior: &GaussianBelief,
) -> Result<FilterRun> {
    let n = data.len();
    let mut cache = DiscretizationCache::new(aug);
    let mut predicted = Vec::with_capacity(n);
    let mut filtered: Vec<GaussianBelief> = Vec::with_capacity(n);
    let mut step_idx = Vec::with_capacity(n.saturating_sub(1));
    let mut loglik = 0.0;
    for k in 0..n {
        let pred = if k == 0 {
            prior.clone()
        } else {
            let idx = cache.index_for(data.times[k] - data.times[k - 1])?;
            step_idx.push(idx);
            predict(&filtered[k - 1], cache.get(idx), data.control(k - 1))
        };
        let post = match data.observations[k].as_ref() {
            Some(y) => {
                let (post, ll) = update(&pred, meas, y)?;
                loglik += ll;
                post
            }
            None => pred.clone(),
        };
        predicted.push(pred);
        filtered.push(post);
    }
    let transitions = step_idx.iter().map(|&i| cache.get(i).ad.clone()).collect();
    Ok(FilterRun { predicted, filtered, transitions, log_likelihood: loglik })
}

/// Log marginal likelihood of `data` without storing the belief sequence.
pub fn filter_log_likelihood(
    aug: &AugmentedLfm,
    meas: &MeasurementModel,
    data: &TimeSeriesData,
    prior: &GaussianBelief,
) -> Result<f64> {
    let mut cache = DiscretizationCache::new(aug);
    let mut belief = prior.clone();
    let mut total = 0.0;
    for k in 0..data.len() {
        if k > 0 {
            let idx = cache.index_for(data.times[k] - data.times[k - 1])?;
            belief = predict(&belief, cache.get(idx), data.control(k - 1));
        }
        if let Some(y) = data.observations[k].as_ref() {
            let (post, ll) = update(&belief, meas, y)?;
            belief = post;
            total += ll;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn static_scalar() -> (GaussianBelief, Discretization, MeasurementModel) {
        let belief = GaussianBelief::new(dvector![0.0], SymmetricPsdMatrix::symmetrized(dmatrix![1.0])).unwrap();
        let disc = Discretization {
            dt: 1.0,
            ad: dmatrix![1.0],
            qd: SymmetricPsdMatrix::zeros(1),
            md: DMatrix::zeros(1, 0),
        };
        let meas = MeasurementModel::new(dmatrix![1.0], dmatrix![1.0]).unwrap();
        (belief, disc, meas)
    }

    #[test]
    fn conjugate_update() {
        let (b, d, m) = static_scalar();
        let (post, ll) = kf_step(&b, &d, None, &m, Some(&dvector![1.0])).unwrap();
        assert_relative_eq!(post.mean[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(post.cov[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(ll, -0.5 * (4.0 * PI).ln() - 0.25, epsilon = 1e-14);
    }

    #[test]
    fn missing_measurement_only_predicts() {
        let (b, mut d, m) = static_scalar();
        d.ad = dmatrix![0.5];
        d.qd = SymmetricPsdMatrix::symmetrized(dmatrix![0.1]);
        let b = GaussianBelief { mean: dvector![2.0], ..b };
        let (post, ll) = kf_step(&b, &d, None, &m, None).unwrap();
        assert_eq!(ll, 0.0);
        assert_relative_eq!(post.mean[0], 1.0);
        assert_relative_eq!(post.cov[(0, 0)], 0.35, epsilon = 1e-15);
    }

    #[test]
    fn wrong_measurement_length() {
        let (b, d, m) = static_scalar();
        assert!(kf_step(&b, &d, None, &m, Some(&dvector![1.0, 2.0])).is_err());
    }
}
