use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{model_noise_std, noise_rng, require};
use crate::control::{basic_lqr_gain, closed_loop_simulate, solve_stationary, ClosedLoopRecord, CostSpec, Schedule, Scenario};
use crate::error::Result;
use crate::gpss::{realize, CovarianceSpec};
use crate::infer::{GaussianBelief, MeasurementModel, DEFAULT_PHYSICAL_PRIOR_VAR};
use crate::model::{augment, build_heat_fourier, heat_force_weights, AugmentedLfm, HeatConfig, Rect};

/// Gaussian heat source moving on a straight line, then switched off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourcePath {
    pub amplitude: f64,
    /// Standard deviation of the Gaussian footprint.
    pub footprint: f64,
    pub start: [f64; 2],
    pub end: [f64; 2],
    /// The source moves from `start` to `end` over `[0, duration]`.
    pub duration: f64,
}

impl Default for SourcePath {
    fn default() -> Self {
        Self { amplitude: 5.0, footprint: 0.05, start: [0.8, 0.8], end: [0.2, 0.2], duration: 10.0 }
    }
}

impl SourcePath {
    pub fn position(&self, t: f64) -> Option<[f64; 2]> {
        if !(0.0..=self.duration).contains(&t) {
            return None;
        }
        let s = t / self.duration;
        Some([self.start[0] + s * (self.end[0] - self.start[0]), self.start[1] + s * (self.end[1] - self.start[1])])
    }

    pub fn value(&self, p: [f64; 2], t: f64) -> f64 {
        match self.position(t) {
            Some(c) => {
                let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                self.amplitude * (-d2 / (2.0 * self.footprint * self.footprint)).exp()
            }
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatExperimentConfig {
    pub diffusivity: f64,
    pub decay: f64,
    pub modes_per_axis: usize,
    /// Sensors sit on an interior grid of this many points per axis.
    pub sensors_per_axis: usize,
    /// Spatial length-scale of the source prior; weights the per-mode variances.
    pub space_ell: f64,
    pub source: SourcePath,
    pub noise_std: f64,
    pub dt: f64,
    pub dt_sim: f64,
    pub horizon: f64,
    /// Temporal prior of every modal source coefficient.
    pub prior: CovarianceSpec,
    /// Weight of the squared modal temperatures in the cost.
    pub state_weight: f64,
    pub control_weight: f64,
    pub snapshot_times: Vec<f64>,
    /// Points per axis of the evaluation grid (boundary included).
    pub field_grid: usize,
    pub seed: u64,
}

impl Default for HeatExperimentConfig {
    fn default() -> Self {
        Self {
            diffusivity: 0.001,
            decay: 0.2,
            modes_per_axis: 10,
            sensors_per_axis: 10,
            space_ell: 0.1,
            source: SourcePath::default(),
            noise_std: 0.01,
            dt: 0.1,
            dt_sim: 0.001,
            horizon: 20.0,
            prior: CovarianceSpec::squared_exponential(0.1, 2.0).with_se_order(2, 4),
            state_weight: 1.0,
            control_weight: 10.0,
            snapshot_times: vec![6.9],
            field_grid: 41,
            seed: 0,
        }
    }
}

impl HeatExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.dt > 0.0 && self.dt_sim > 0.0 && self.horizon > 0.0, || {
            "time steps and horizon must be positive".into()
        })?;
        require(self.sensors_per_axis > 0, || "at least one sensor per axis is required".into())?;
        require(self.field_grid >= 2, || "field grid needs at least two points per axis".into())?;
        require(self.noise_std >= 0.0 && self.noise_std.is_finite(), || "noise_std must be non-negative".into())?;
        require(self.source.footprint > 0.0 && self.source.duration > 0.0 && self.source.amplitude.is_finite(), || {
            "source needs a positive footprint and duration".into()
        })?;
        require(self.state_weight >= 0.0 && self.control_weight > 0.0, || {
            "cost weights must be non-negative with a positive control weight".into()
        })?;
        if let Some(t) = self.snapshot_times.iter().find(|t| !(0.0..=self.horizon).contains(*t)) {
            return Err(crate::error::argument(format!("snapshot time {t} lies outside [0, {}]", self.horizon)));
        }
        self.prior.validate()?;
        self.heat_config().validate()
    }

    pub fn heat_config(&self) -> HeatConfig {
        HeatConfig {
            diffusivity: self.diffusivity,
            decay: self.decay,
            modes_per_axis: self.modes_per_axis,
            domain: Rect::UNIT,
            sensors: HeatConfig::interior_grid(Rect::UNIT, self.sensors_per_axis),
            space_ell: self.space_ell,
        }
    }
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Modal coefficients of the source, `∫ u(x, t) φ_k(x) dx`, from the
/// separable form of Gaussian and basis.
fn source_projection(cfg: &HeatConfig, source: &SourcePath, t: f64) -> DVector<f64> {
    let n = cfg.n_modes();
    let Some(c) = source.position(t) else {
        return DVector::zeros(n);
    };
    let d = cfg.domain;
    let w = source.footprint;
    let axis = |lo: f64, len: f64, centre: f64, j: usize| {
        let a = (centre - 8.0 * w).max(lo);
        let b = (centre + 8.0 * w).min(lo + len);
        if b <= a {
            return 0.0;
        }
        let k = j as f64 * PI / len;
        simpson(|x| (-(x - centre).powi(2) / (2.0 * w * w)).exp() * (k * (x - lo)).sin(), a, b, 400)
    };
    let m = cfg.modes_per_axis;
    let ix: Vec<f64> = (1..=m).map(|j| axis(d.x_min, d.width(), c[0], j)).collect();
    let iy: Vec<f64> = (1..=m).map(|k| axis(d.y_min, d.height(), c[1], k)).collect();
    let norm = 2.0 / (d.width() * d.height()).sqrt();
    DVector::from_fn(n, |idx, _| {
        let (j, k) = cfg.mode_numbers(idx);
        source.amplitude * norm * ix[j - 1] * iy[k - 1]
    })
}

/// Evaluation of modal fields on a regular grid including the boundary.
struct FieldGrid {
    points: Vec<[f64; 2]>,
    /// `points × modes`.
    basis: DMatrix<f64>,
}

impl FieldGrid {
    fn new(cfg: &HeatConfig, per_axis: usize) -> Self {
        let d = cfg.domain;
        let mut points = Vec::with_capacity(per_axis * per_axis);
        for i in 0..per_axis {
            for j in 0..per_axis {
                let s = i as f64 / (per_axis - 1) as f64;
                let r = j as f64 / (per_axis - 1) as f64;
                points.push([d.x_min + s * d.width(), d.y_min + r * d.height()]);
            }
        }
        let basis = DMatrix::from_fn(points.len(), cfg.n_modes(), |p, k| cfg.basis_value(k, points[p]));
        Self { points, basis }
    }

    fn eval(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.basis * coeffs
    }
}

/// Fields of one controller at one time, sampled on the evaluation grid.
#[derive(Debug, Clone, Serialize)]
pub struct HeatSnapshot {
    pub controller: String,
    pub t: f64,
    pub temperature: Vec<f64>,
    pub temperature_est: Vec<f64>,
    pub source: Vec<f64>,
    pub source_est: Vec<f64>,
    pub control: Vec<f64>,
    /// `∫ c(x) û(x) dx` in modal coordinates (orthonormal basis).
    pub control_source_inner: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HeatRun {
    pub controller: String,
    /// Maximum of the true temperature field over the grid at each measurement time.
    pub max_temperature: Vec<f64>,
    pub record: ClosedLoopRecord,
}

#[derive(Debug, Clone, Serialize)]
pub struct HeatResult {
    pub times: Vec<f64>,
    pub grid_points: Vec<[f64; 2]>,
    pub state_dim: usize,
    pub runs: Vec<HeatRun>,
    pub snapshots: Vec<HeatSnapshot>,
}

impl HeatResult {
    pub fn run(&self, controller: &str) -> Option<&HeatRun> {
        self.runs.iter().find(|r| r.controller == controller)
    }
}

fn heat_model(cfg: &HeatExperimentConfig, hc: &HeatConfig) -> Result<AugmentedLfm> {
    let phys = build_heat_fourier(hc)?;
    let base = realize(&cfg.prior)?;
    let forces: Vec<_> = heat_force_weights(hc).into_iter().map(|w| base.scaled_variance(w)).collect();
    augment(&phys, &forces)
}

/// Moving-source scenario run uncontrolled, with the force-blind controller
/// and with the force-aware controller, all on the same noise stream.
pub fn run_heat_control(cfg: &HeatExperimentConfig) -> Result<HeatResult> {
    cfg.validate()?;
    let hc = cfg.heat_config();
    let phys = build_heat_fourier(&hc)?;
    let aug = heat_model(cfg, &hc)?;
    let n = hc.n_modes();
    let cost = CostSpec::stationary(DMatrix::identity(n, n) * cfg.state_weight, DMatrix::identity(n, n) * cfg.control_weight);
    let basic_gain = basic_lqr_gain(&aug, &cost)?.gain;
    let lfm_gain = solve_stationary(&aug, &cost)?.gain;

    let meas = MeasurementModel::isotropic(aug.c.clone(), model_noise_std(cfg.noise_std))?;
    let prior = GaussianBelief::stationary_prior(&aug, DEFAULT_PHYSICAL_PRIOR_VAR);
    let source = cfg.source.clone();
    let force = move |t: f64| source_projection(&hc, &source, t);
    let scenario = Scenario { plant: &phys, force: &force, initial_state: DVector::zeros(n), noise_std: cfg.noise_std };
    let schedule = Schedule { t0: 0.0, horizon: cfg.horizon, dt_meas: cfg.dt, dt_sim: cfg.dt_sim, control_on: 0.0 };
    let grid = FieldGrid::new(&cfg.heat_config(), cfg.field_grid);

    let mut runs = Vec::new();
    let mut snapshots = Vec::new();
    for (label, gain) in [("uncontrolled", None), ("basic", Some(&basic_gain)), ("lfm", Some(&lfm_gain))] {
        let record = closed_loop_simulate(&scenario, &aug, gain, &meas, &prior, &schedule, &mut noise_rng(cfg.seed))?;
        let max_temperature = record.f_true.iter().map(|f| grid.eval(f).max().max(0.0)).collect();
        for &ts in &cfg.snapshot_times {
            let k = ((ts / cfg.dt).round() as usize).min(record.times.len() - 1);
            let coeff_source = record.u_true[k].clone();
            snapshots.push(HeatSnapshot {
                controller: label.to_string(),
                t: record.times[k],
                temperature: grid.eval(&record.f_true[k]).data.into(),
                temperature_est: grid.eval(&record.f_est[k]).data.into(),
                source: grid.eval(&coeff_source).data.into(),
                source_est: grid.eval(&record.u_est[k]).data.into(),
                control: grid.eval(&record.controls[k]).data.into(),
                control_source_inner: record.controls[k].dot(&record.u_est[k]),
            });
        }
        runs.push(HeatRun { controller: label.to_string(), max_temperature, record });
    }
    Ok(HeatResult {
        times: schedule.times(),
        grid_points: grid.points,
        state_dim: aug.dim(),
        runs,
        snapshots,
    })
}
