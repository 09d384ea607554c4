use nalgebra::DMatrix;

use super::{run_filter, GaussianBelief, MeasurementModel, TimeSeriesData};
use crate::error::{dimension, LfmError, Result};
use crate::model::AugmentedLfm;
use crate::numlin::SymmetricPsdMatrix;

/// Rauch–Tung–Striebel backward pass.
///
/// `predicted[k + 1]` must be the prediction of `filtered[k]` through
/// `transitions[k]`.
pub fn rts_smooth(
    filtered: &[GaussianBelief],
    predicted: &[GaussianBelief],
    transitions: &[DMatrix<f64>],
) -> Result<Vec<GaussianBelief>> {
    let n = filtered.len();
    if predicted.len() != n || transitions.len() + 1 != n.max(1) {
        return Err(dimension(format!(
            "{} filtered, {} predicted and {} transitions are not aligned",
            n,
            predicted.len(),
            transitions.len()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut smoothed = vec![filtered[n - 1].clone(); n];
    for k in (0..n - 1).rev() {
        let f = &filtered[k];
        let p_next = &predicted[k + 1];
        let s_next = &smoothed[k + 1];
        let ad_f = &transitions[k] * f.cov.as_matrix();
        // G = F Adᵀ Pp⁻¹  ⇔  Gᵀ = Pp⁻¹ Ad F
        let gain_t = match p_next.cov.as_matrix().clone().cholesky() {
            Some(ch) => ch.solve(&ad_f),
            None => p_next
                .cov
                .as_matrix()
                .clone()
                .lu()
                .solve(&ad_f)
                .ok_or_else(|| LfmError::Conditioning(format!("predicted covariance at step {} is singular", k + 1)))?,
        };
        let gain = gain_t.transpose();
        let mean = &f.mean + &gain * (&s_next.mean - &p_next.mean);
        let cov = f.cov.as_matrix() + &gain * (s_next.cov.as_matrix() - p_next.cov.as_matrix()) * &gain_t;
        smoothed[k] = GaussianBelief { mean, cov: SymmetricPsdMatrix::symmetrized(cov) };
    }
    Ok(smoothed)
}

/// Filter then smooth `data` from `prior`.
pub fn smooth(
    aug: &AugmentedLfm,
    meas: &MeasurementModel,
    data: &TimeSeriesData,
    prior: &GaussianBelief,
) -> Result<Vec<GaussianBelief>> {
    let run = run_filter(aug, meas, data, prior)?;
    rts_smooth(&run.filtered, &run.predicted, &run.transitions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn single_step_is_filtered() {
        let b = GaussianBelief::new(dvector![0.3], SymmetricPsdMatrix::symmetrized(dmatrix![2.0])).unwrap();
        let s = rts_smooth(std::slice::from_ref(&b), std::slice::from_ref(&b), &[]).unwrap();
        assert_eq!(s[0], b);
    }

    #[test]
    fn deterministic_dynamics_are_inverted() {
        // Qd = 0, rotation-like invertible Ad
        let ad = dmatrix![0.9, 0.2; -0.1, 1.05];
        let f0 = GaussianBelief::new(dvector![1.0, -1.0], SymmetricPsdMatrix::symmetrized(dmatrix![1.0, 0.1; 0.1, 0.5])).unwrap();
        let p1 = GaussianBelief {
            mean: &ad * &f0.mean,
            cov: SymmetricPsdMatrix::symmetrized(&ad * f0.cov.as_matrix() * ad.transpose()),
        };
        // an update at step 1 moves the mean; smoothing must carry it back exactly
        let f1 = GaussianBelief { mean: dvector![0.4, 0.7], cov: SymmetricPsdMatrix::symmetrized(dmatrix![0.2, 0.0; 0.0, 0.3]) };
        let s = rts_smooth(&[f0, f1.clone()], &[p1.clone(), p1], std::slice::from_ref(&ad)).unwrap();
        let back = ad.clone().try_inverse().unwrap() * &f1.mean;
        assert_relative_eq!(s[0].mean, back, epsilon = 1e-12);
        assert_eq!(s[1], f1);
    }
}
