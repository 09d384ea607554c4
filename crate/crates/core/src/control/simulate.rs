use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{argument, dimension, Result};
use crate::infer::{discretize, predict, update, zoh_input_matrix, GaussianBelief, MeasurementModel};
use crate::model::{AugmentedLfm, LtiPhysicalSystem};
use crate::numlin::expm;

/// Ground truth for a closed-loop run: the plant, its deterministic force
/// `u(t)` (one value per force channel) and the initial state.
pub struct Scenario<'a> {
    pub plant: &'a LtiPhysicalSystem,
    pub force: &'a dyn Fn(f64) -> DVector<f64>,
    pub initial_state: DVector<f64>,
    /// Standard deviation of the additive measurement noise.
    pub noise_std: f64,
}

/// Timing of a closed-loop run. Measurements are taken at
/// `t0 + k·dt_meas` up to `horizon`; the plant is integrated exactly on the
/// finer `dt_sim` grid with the force held over each fine step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Schedule {
    pub t0: f64,
    pub horizon: f64,
    pub dt_meas: f64,
    pub dt_sim: f64,
    /// Feedback is applied from the first measurement at or after this time.
    pub control_on: f64,
}

impl Schedule {
    pub(crate) fn substeps(&self) -> Result<usize> {
        if !(self.dt_meas > 0.0 && self.dt_sim > 0.0 && self.horizon > self.t0) {
            return Err(argument(format!("invalid schedule {self:?}")));
        }
        let ratio = self.dt_meas / self.dt_sim;
        let sub = ratio.round();
        if sub < 1.0 || (ratio - sub).abs() > 1e-9 * ratio {
            return Err(argument(format!(
                "measurement step {} is not a multiple of simulation step {}",
                self.dt_meas, self.dt_sim
            )));
        }
        Ok(sub as usize)
    }

    /// Measurement times.
    pub fn times(&self) -> Vec<f64> {
        let n = ((self.horizon - self.t0) / self.dt_meas + 1e-9).floor() as usize;
        (0..=n).map(|k| self.t0 + k as f64 * self.dt_meas).collect()
    }
}

/// Everything recorded at the measurement times of a closed-loop run.
#[derive(Debug, Clone, Serialize)]
pub struct ClosedLoopRecord {
    pub times: Vec<f64>,
    pub f_true: Vec<DVector<f64>>,
    pub u_true: Vec<DVector<f64>>,
    pub observations: Vec<DVector<f64>>,
    /// Filtered mean and marginal variances of the physical states.
    pub f_est: Vec<DVector<f64>>,
    pub f_var: Vec<DVector<f64>>,
    /// Filtered force estimate `Cu·ĝ_u` and its marginal variances.
    pub u_est: Vec<DVector<f64>>,
    pub u_var: Vec<DVector<f64>>,
    /// Control applied from each measurement time until the next.
    pub controls: Vec<DVector<f64>>,
    /// Time average of `‖C_f f‖` over the control window on the fine grid.
    pub tracking_error: f64,
    /// Time average of `‖c‖²` over the control window.
    pub control_energy: f64,
}

/// Exact zero-order-hold integrator of the true plant.
struct Truth<'s, 'a> {
    scenario: &'s Scenario<'a>,
    phi: DMatrix<f64>,
    gamma: DMatrix<f64>,
    drive: DVector<f64>,
    f: DVector<f64>,
}

impl<'s, 'a> Truth<'s, 'a> {
    fn new(scenario: &'s Scenario<'a>, dt_sim: f64) -> Result<Self> {
        let plant = scenario.plant;
        let (nf, np, nc) = (plant.n_states(), plant.n_forces(), plant.n_controls());
        if scenario.initial_state.len() != nf {
            return Err(dimension("initial state does not match the plant"));
        }
        if !(scenario.noise_std >= 0.0 && scenario.noise_std.is_finite()) {
            return Err(argument("noise standard deviation must be finite and non-negative"));
        }
        let phi = expm(&(&plant.af * dt_sim))?;
        let mut inputs = DMatrix::zeros(nf, np + nc);
        inputs.columns_mut(0, np).copy_from(&plant.bf);
        inputs.columns_mut(np, nc).copy_from(&plant.mf);
        let gamma = zoh_input_matrix(&plant.af, &inputs, dt_sim)?;
        Ok(Self { scenario, phi, gamma, drive: DVector::zeros(np + nc), f: scenario.initial_state.clone() })
    }

    fn force(&self, t: f64) -> Result<DVector<f64>> {
        let u = (self.scenario.force)(t);
        let np = self.scenario.plant.n_forces();
        if u.len() != np {
            return Err(dimension(format!("force has {} channels, plant expects {np}", u.len())));
        }
        Ok(u)
    }

    /// Advances `sub` fine steps from `start` holding `control`; `visit` sees
    /// the state at the left end of every step.
    fn advance(
        &mut self,
        start: f64,
        sub: usize,
        dt_sim: f64,
        control: &DVector<f64>,
        mut visit: impl FnMut(f64, &DVector<f64>),
    ) -> Result<()> {
        let np = self.scenario.plant.n_forces();
        for i in 0..sub {
            let t = start + i as f64 * dt_sim;
            visit(t, &self.f);
            let u = self.force(t)?;
            self.drive.rows_mut(0, np).copy_from(&u);
            self.drive.rows_mut(np, control.len()).copy_from(control);
            self.f = &self.phi * &self.f + &self.gamma * &self.drive;
        }
        Ok(())
    }

    fn measure<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let plant = self.scenario.plant;
        let noise = DVector::from_fn(plant.n_outputs(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &plant.cf * &self.f + noise * self.scenario.noise_std
    }
}

/// Truth and noisy outputs of an uncontrolled run at the measurement times.
#[derive(Debug, Clone, Serialize)]
pub struct OpenLoopData {
    pub times: Vec<f64>,
    pub f_true: Vec<DVector<f64>>,
    pub u_true: Vec<DVector<f64>>,
    pub observations: Vec<DVector<f64>>,
}

/// Uncontrolled simulation. Uses the same integrator and noise stream as
/// [`closed_loop_simulate`], so both agree exactly while no control acts.
pub fn simulate_open_loop<R: Rng>(scenario: &Scenario, schedule: &Schedule, rng: &mut R) -> Result<OpenLoopData> {
    let sub = schedule.substeps()?;
    let times = schedule.times();
    let mut truth = Truth::new(scenario, schedule.dt_sim)?;
    let zero = DVector::zeros(scenario.plant.n_controls());
    let mut out = OpenLoopData { times: times.clone(), f_true: vec![], u_true: vec![], observations: vec![] };
    for (k, &tk) in times.iter().enumerate() {
        if k > 0 {
            truth.advance(times[k - 1], sub, schedule.dt_sim, &zero, |_, _| {})?;
        }
        out.observations.push(truth.measure(rng));
        out.f_true.push(truth.f.clone());
        out.u_true.push(truth.force(tk)?);
    }
    Ok(out)
}

/// Certainty-equivalence closed loop: a Kalman filter on `aug` estimates the
/// joint state from noisy outputs of the true plant, and `c = −gain·ĝ` is
/// applied with zero-order hold until the next measurement. Without a gain
/// the run is open loop.
pub fn closed_loop_simulate<R: Rng>(
    scenario: &Scenario,
    aug: &AugmentedLfm,
    gain: Option<&DMatrix<f64>>,
    meas: &MeasurementModel,
    prior: &GaussianBelief,
    schedule: &Schedule,
    rng: &mut R,
) -> Result<ClosedLoopRecord> {
    let plant = scenario.plant;
    let (nf, nu) = (aug.n_f, aug.n_u);
    let n_c = plant.n_controls();
    if plant.n_states() != nf || aug.m.ncols() != n_c {
        return Err(dimension("plant and model disagree in size"));
    }
    if prior.dim() != aug.dim() || meas.c.ncols() != aug.dim() || meas.n_outputs() != plant.n_outputs() {
        return Err(dimension("prior or measurement model does not match the augmented model"));
    }
    if let Some(g) = gain {
        if g.shape() != (n_c, aug.dim()) {
            return Err(dimension(format!("gain is {:?}, expected {n_c}x{}", g.shape(), aug.dim())));
        }
    }
    let sub = schedule.substeps()?;
    let times = schedule.times();
    let mut truth = Truth::new(scenario, schedule.dt_sim)?;
    let disc = discretize(aug, schedule.dt_meas)?;

    let n = times.len();
    let mut rec = ClosedLoopRecord {
        times: times.clone(),
        f_true: Vec::with_capacity(n),
        u_true: Vec::with_capacity(n),
        observations: Vec::with_capacity(n),
        f_est: Vec::with_capacity(n),
        f_var: Vec::with_capacity(n),
        u_est: Vec::with_capacity(n),
        u_var: Vec::with_capacity(n),
        controls: Vec::with_capacity(n),
        tracking_error: 0.0,
        control_energy: 0.0,
    };
    let mut belief = prior.clone();
    let mut control = DVector::zeros(n_c);
    let (mut err_sum, mut energy_sum, mut count) = (0.0, 0.0, 0usize);
    let on_tol = 1e-9 * schedule.dt_meas;
    let control_on = schedule.control_on - on_tol;

    for (k, &tk) in times.iter().enumerate() {
        if k > 0 {
            let energy = control.norm_squared();
            truth.advance(times[k - 1], sub, schedule.dt_sim, &control, |t, f| {
                if t >= control_on {
                    err_sum += (&plant.cf * f).norm();
                    energy_sum += energy;
                    count += 1;
                }
            })?;
            belief = predict(&belief, &disc, Some(&control));
        }

        let y = truth.measure(rng);
        belief = update(&belief, meas, &y)?.0;

        control = match gain {
            Some(g) if tk >= control_on => -(g * &belief.mean),
            _ => DVector::zeros(n_c),
        };

        let cov = belief.cov.as_matrix();
        let latent_cov = cov.view((nf, nf), (nu, nu));
        rec.f_true.push(truth.f.clone());
        rec.u_true.push(truth.force(tk)?);
        rec.observations.push(y);
        rec.f_est.push(belief.mean.rows(0, nf).into_owned());
        rec.f_var.push(cov.diagonal().rows(0, nf).into_owned());
        rec.u_est.push(&aug.cu * belief.mean.rows(nf, nu));
        rec.u_var.push((&aug.cu * latent_cov * aug.cu.transpose()).diagonal());
        rec.controls.push(control.clone());
    }
    if count > 0 {
        rec.tracking_error = err_sum / count as f64;
        rec.control_energy = energy_sum / count as f64;
    }
    Ok(rec)
}
