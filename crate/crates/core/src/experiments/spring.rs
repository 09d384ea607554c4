use nalgebra::{dmatrix, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{model_noise_std, noise_rng, require, rmse};
use crate::control::{
    basic_lqr_gain, closed_loop_simulate, simulate_open_loop, solve_stationary, ClosedLoopRecord, CostSpec, Schedule,
    Scenario,
};
use crate::error::Result;
use crate::gpss::{realize, CovarianceSpec};
use crate::infer::{
    fit_hyperparameters, smooth, FitOptions, FitResult, GaussianBelief, MeasurementModel, TimeSeriesData,
    DEFAULT_PHYSICAL_PRIOR_VAR,
};
use crate::model::{augment, build_spring, AugmentedLfm, LtiPhysicalSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpringCost {
    pub position: f64,
    pub velocity: f64,
    pub control: f64,
}

impl Default for SpringCost {
    fn default() -> Self {
        Self { position: 1.0, velocity: 0.0, control: 0.1 }
    }
}

/// Damped spring driven by `u(t) = a (sin 0.23t + sin 0.13t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpringConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub force_amplitude: f64,
    pub noise_std: f64,
    /// Measurement interval.
    pub dt: f64,
    /// Step of the exact truth integrator; must divide `dt`.
    pub dt_sim: f64,
    /// Hyperparameters are learned from measurements before this time.
    pub train_end: f64,
    /// No measurements after this time (open-loop run).
    pub meas_end: f64,
    pub horizon: f64,
    /// Feedback starts here (control run).
    pub control_on: f64,
    /// Force prior; `sigma` and `ell` are the starting point when fitting.
    pub prior: CovarianceSpec,
    pub fit: bool,
    pub fit_max_iter: usize,
    pub cost: SpringCost,
    pub seed: u64,
}

impl Default for SpringConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            gamma: 1.0,
            force_amplitude: 1.0,
            noise_std: 0.01,
            dt: 0.01,
            dt_sim: 0.001,
            train_end: 50.0,
            meas_end: 90.0,
            horizon: 100.0,
            control_on: 50.0,
            prior: CovarianceSpec::squared_exponential(1.0, 1.0),
            fit: true,
            fit_max_iter: 200,
            cost: SpringCost::default(),
            seed: 0,
        }
    }
}

impl SpringConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.dt > 0.0 && self.dt_sim > 0.0, || "time steps must be positive".into())?;
        require(0.0 < self.train_end && self.train_end <= self.meas_end && self.meas_end <= self.horizon, || {
            format!(
                "need 0 < train_end ≤ meas_end ≤ horizon, got {} / {} / {}",
                self.train_end, self.meas_end, self.horizon
            )
        })?;
        require((0.0..=self.horizon).contains(&self.control_on), || {
            format!("control_on {} must lie in [0, horizon]", self.control_on)
        })?;
        require(self.noise_std >= 0.0 && self.noise_std.is_finite(), || "noise_std must be non-negative".into())?;
        require(self.force_amplitude.is_finite(), || "force_amplitude must be finite".into())?;
        require(self.cost.position >= 0.0 && self.cost.velocity >= 0.0 && self.cost.control > 0.0, || {
            "cost weights must be non-negative with a positive control weight".into()
        })?;
        self.prior.validate()
    }

    pub fn force(&self, t: f64) -> f64 {
        self.force_amplitude * ((0.23 * t).sin() + (0.13 * t).sin())
    }

    fn schedule(&self, horizon: f64, control_on: f64) -> Schedule {
        Schedule { t0: 0.0, horizon, dt_meas: self.dt, dt_sim: self.dt_sim, control_on }
    }

    fn cost(&self) -> CostSpec {
        CostSpec::stationary(dmatrix![self.cost.position, 0.0; 0.0, self.cost.velocity], dmatrix![self.cost.control])
    }
}

/// Measurements before `train_end` and the force prior learned from them.
fn learn_prior(cfg: &SpringConfig, phys: &LtiPhysicalSystem) -> Result<(CovarianceSpec, Option<FitResult>)> {
    let force = |t: f64| DVector::from_element(1, cfg.force(t));
    let scenario = Scenario { plant: phys, force: &force, initial_state: DVector::zeros(2), noise_std: cfg.noise_std };
    let data = simulate_open_loop(&scenario, &cfg.schedule(cfg.train_end, cfg.horizon), &mut noise_rng(cfg.seed))?;
    if !cfg.fit {
        return Ok((cfg.prior, None));
    }
    let (times, obs): (Vec<f64>, Vec<Option<DVector<f64>>>) = data
        .times
        .iter()
        .zip(&data.observations)
        .filter(|(t, _)| **t < cfg.train_end - 1e-9 * cfg.dt)
        .map(|(t, y)| (*t, Some(y.clone())))
        .unzip();
    let training = TimeSeriesData::new(times, obs, None)?;
    let r = DMatrix::from_element(1, 1, model_noise_std(cfg.noise_std).powi(2));
    let opts = FitOptions { max_iter: cfg.fit_max_iter, ..FitOptions::default() };
    let fit = fit_hyperparameters(&training, &cfg.prior, Some(phys), &r, &opts)?;
    Ok((fit.spec, Some(fit)))
}

fn filter_model(phys: &LtiPhysicalSystem, spec: &CovarianceSpec, noise_std: f64) -> Result<(AugmentedLfm, MeasurementModel, GaussianBelief)> {
    let aug = augment(phys, &[realize(spec)?])?;
    let meas = MeasurementModel::isotropic(aug.c.clone(), model_noise_std(noise_std))?;
    let prior = GaussianBelief::stationary_prior(&aug, DEFAULT_PHYSICAL_PRIOR_VAR);
    Ok((aug, meas, prior))
}

/// One row of the open-loop trajectory table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpringRow {
    pub t: f64,
    pub f_true: f64,
    pub f_est: f64,
    pub f_std: f64,
    pub u_true: f64,
    pub u_est: f64,
    pub u_std: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpringOpenLoopResult {
    pub spec: CovarianceSpec,
    pub fit: Option<FitResult>,
    pub rows: Vec<SpringRow>,
    /// Force and position RMSE where measurements exist and after they stop.
    pub u_rmse_measured: f64,
    pub u_rmse_extrapolated: f64,
    pub f_rmse_measured: f64,
    pub f_rmse_extrapolated: f64,
}

/// Learns the force prior on the training window, then smooths the whole
/// horizon with measurements withheld after `meas_end`.
pub fn run_spring_open_loop(cfg: &SpringConfig) -> Result<SpringOpenLoopResult> {
    cfg.validate()?;
    let phys = build_spring(cfg.lambda, cfg.gamma)?;
    let (spec, fit) = learn_prior(cfg, &phys)?;

    let force = |t: f64| DVector::from_element(1, cfg.force(t));
    let scenario = Scenario { plant: &phys, force: &force, initial_state: DVector::zeros(2), noise_std: cfg.noise_std };
    let sim = simulate_open_loop(&scenario, &cfg.schedule(cfg.horizon, cfg.horizon), &mut noise_rng(cfg.seed))?;
    let cutoff = cfg.meas_end + 1e-9 * cfg.dt;
    let obs = sim
        .times
        .iter()
        .zip(&sim.observations)
        .map(|(t, y)| (*t <= cutoff).then(|| y.clone()))
        .collect();
    let data = TimeSeriesData::new(sim.times.clone(), obs, None)?;
    let (aug, meas, prior) = filter_model(&phys, &spec, cfg.noise_std)?;
    let smoothed = smooth(&aug, &meas, &data, &prior)?;

    let rows: Vec<SpringRow> = smoothed
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let latent = b.mean.rows(aug.n_f, aug.n_u);
            let lcov = b.cov.view((aug.n_f, aug.n_f), (aug.n_u, aug.n_u));
            SpringRow {
                t: sim.times[k],
                f_true: sim.f_true[k][0],
                f_est: b.mean[0],
                f_std: b.std(0),
                u_true: sim.u_true[k][0],
                u_est: (&aug.cu * latent)[0],
                u_std: (&aug.cu * lcov * aug.cu.transpose())[(0, 0)].max(0.0).sqrt(),
            }
        })
        .collect();
    let window = |measured: bool| rows.iter().filter(move |r| (r.t <= cutoff) == measured);
    Ok(SpringOpenLoopResult {
        spec,
        fit,
        u_rmse_measured: rmse(window(true).map(|r| (r.u_est, r.u_true))),
        u_rmse_extrapolated: rmse(window(false).map(|r| (r.u_est, r.u_true))),
        f_rmse_measured: rmse(window(true).map(|r| (r.f_est, r.f_true))),
        f_rmse_extrapolated: rmse(window(false).map(|r| (r.f_est, r.f_true))),
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpringControlResult {
    pub spec: CovarianceSpec,
    pub fit: Option<FitResult>,
    pub basic_gain: DMatrix<f64>,
    pub lfm_gain: DMatrix<f64>,
    pub basic: ClosedLoopRecord,
    pub lfm: ClosedLoopRecord,
    /// `lfm.tracking_error / basic.tracking_error`.
    pub error_ratio: f64,
}

/// Learns the force prior open loop, then runs the same scenario (same noise
/// stream) under the force-blind and the force-aware stationary controllers.
pub fn run_spring_control(cfg: &SpringConfig) -> Result<SpringControlResult> {
    cfg.validate()?;
    let phys = build_spring(cfg.lambda, cfg.gamma)?;
    let (spec, fit) = learn_prior(cfg, &phys)?;
    let (aug, meas, prior) = filter_model(&phys, &spec, cfg.noise_std)?;
    let cost = cfg.cost();
    let basic_gain = basic_lqr_gain(&aug, &cost)?.gain;
    let lfm_gain = solve_stationary(&aug, &cost)?.gain;

    let force = |t: f64| DVector::from_element(1, cfg.force(t));
    let scenario = Scenario { plant: &phys, force: &force, initial_state: DVector::zeros(2), noise_std: cfg.noise_std };
    let schedule = cfg.schedule(cfg.horizon, cfg.control_on);
    let run = |gain: &DMatrix<f64>| {
        closed_loop_simulate(&scenario, &aug, Some(gain), &meas, &prior, &schedule, &mut noise_rng(cfg.seed))
    };
    let basic = run(&basic_gain)?;
    let lfm = run(&lfm_gain)?;
    let error_ratio = if basic.tracking_error > 0.0 { lfm.tracking_error / basic.tracking_error } else { f64::NAN };
    Ok(SpringControlResult { spec, fit, basic_gain, lfm_gain, basic, lfm, error_ratio })
}
