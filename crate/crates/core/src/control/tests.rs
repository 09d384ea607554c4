use super::*;
use crate::gpss::{realize, CovarianceSpec};
use crate::infer::{GaussianBelief, MeasurementModel};
use crate::model::{augment, build_heat_fourier, build_spring, HeatConfig, LtiPhysicalSystem, Rect};
use crate::numlin::spectral_abscissa;
use approx::assert_relative_eq;
use nalgebra::{dmatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spring_aug(coupled: bool) -> AugmentedLfm {
    let mut phys = build_spring(0.1, 1.0).unwrap();
    if !coupled {
        phys.bf = DMatrix::zeros(2, 1);
    }
    augment(&phys, &[realize(&CovarianceSpec::matern_half(1.0, 2.0)).unwrap()]).unwrap()
}

fn scalar_plant(a: f64) -> AugmentedLfm {
    let phys = LtiPhysicalSystem::new(
        dmatrix![a],
        DMatrix::zeros(1, 0),
        dmatrix![1.0],
        dmatrix![1.0],
        vec!["x".into()],
    )
    .unwrap();
    augment(&phys, &[]).unwrap()
}

fn spring_cost() -> CostSpec {
    CostSpec::stationary(dmatrix![1.0, 0.0; 0.0, 0.0], dmatrix![1.0])
}

fn grid(t: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| t * k as f64 / n as f64).collect()
}

fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

#[test]
fn zero_weights_give_zero_solution() {
    let aug = spring_aug(true);
    let cost = CostSpec::finite(DMatrix::zeros(2, 2), dmatrix![1.0], DMatrix::zeros(2, 2), 5.0);
    let sol = solve_finite_horizon(&aug, &cost, &grid(5.0, 10)).unwrap();
    for s in sol.trajectory().unwrap() {
        assert_eq!(s.p.amax(), 0.0);
        assert_eq!(s.gain.amax(), 0.0);
    }
}

#[test]
fn scalar_integrator_follows_tanh() {
    let aug = scalar_plant(0.0);
    let t_end = 3.0;
    let cost = CostSpec::finite(dmatrix![1.0], dmatrix![1.0], dmatrix![0.0], t_end);
    let g = grid(t_end, 30);
    let sol = solve_finite_horizon(&aug, &cost, &g).unwrap();
    for s in sol.trajectory().unwrap() {
        assert_relative_eq!(s.p[(0, 0)], (t_end - s.t).tanh(), epsilon = 1e-9);
        assert_relative_eq!(s.gain[(0, 0)], (t_end - s.t).tanh(), epsilon = 1e-9);
    }
}

#[test]
fn long_horizon_approaches_stationary_solution() {
    let aug = spring_aug(true);
    let x = dmatrix![1.0, 0.0; 0.0, 0.0];
    let cost = CostSpec::finite(x.clone(), dmatrix![1.0], DMatrix::zeros(2, 2), 60.0);
    let finite = solve_finite_horizon(&aug, &cost, &grid(60.0, 6)).unwrap();
    let stationary = solve_stationary(&aug, &CostSpec::stationary(x, dmatrix![1.0])).unwrap();
    assert!(max_diff(finite.p.as_matrix(), stationary.p.as_matrix()) < 1e-6);
}

#[test]
fn partitioned_integration_matches_full() {
    let aug = spring_aug(true);
    let cost = CostSpec::finite(dmatrix![1.0, 0.0; 0.0, 0.5], dmatrix![0.3], dmatrix![2.0, 0.1; 0.1, 1.0], 10.0);
    let g = grid(10.0, 100);
    let full = solve_finite_horizon(&aug, &cost, &g).unwrap();
    let part = solve_finite_horizon_partitioned(&aug, &cost, &g).unwrap();
    for (a, b) in full.trajectory().unwrap().iter().zip(part.trajectory().unwrap()) {
        assert!(max_diff(a.p.as_matrix(), b.p.as_matrix()) <= 1e-8);
        assert!(b.p.is_psd());
    }
}

#[test]
fn uncoupled_force_leaves_cross_blocks_zero() {
    let aug = spring_aug(false);
    let cost = CostSpec::finite(dmatrix![1.0, 0.0; 0.0, 0.0], dmatrix![1.0], DMatrix::zeros(2, 2), 10.0);
    let sol = solve_finite_horizon_partitioned(&aug, &cost, &grid(10.0, 20)).unwrap();
    for s in sol.trajectory().unwrap() {
        let view = LqrSolution { p: s.p.clone(), gain: s.gain.clone(), n_f: 2, mode: LqrMode::Stationary };
        assert_eq!(view.p12().amax(), 0.0);
        assert_eq!(view.p22().amax(), 0.0);
        assert_eq!(view.latent_gain().amax(), 0.0);
    }
}

#[test]
fn physical_block_ignores_latent_force() {
    let with = spring_aug(true);
    let phys = build_spring(0.1, 1.0).unwrap();
    let mut bare = phys.clone();
    bare.bf = DMatrix::zeros(2, 0);
    let without = augment(&bare, &[]).unwrap();
    let cost = CostSpec::finite(dmatrix![1.0, 0.0; 0.0, 0.0], dmatrix![1.0], DMatrix::identity(2, 2), 10.0);
    let g = grid(10.0, 50);
    let a = solve_finite_horizon_partitioned(&with, &cost, &g).unwrap();
    let b = solve_finite_horizon_partitioned(&without, &cost, &g).unwrap();
    for (sa, sb) in a.trajectory().unwrap().iter().zip(b.trajectory().unwrap()) {
        let p11 = sa.p.view((0, 0), (2, 2)).into_owned();
        assert!(max_diff(&p11, sb.p.as_matrix()) < 1e-9);
    }
}

#[test]
fn blow_up_is_reported() {
    let aug = scalar_plant(50.0);
    let cost = CostSpec::finite(dmatrix![1.0], dmatrix![1e12], dmatrix![1.0], 10.0);
    let r = solve_finite_horizon(&aug, &cost, &grid(10.0, 10));
    assert!(matches!(r, Err(LfmError::Integration { .. })), "{r:?}");
}

#[test]
fn grid_must_end_at_horizon() {
    let aug = scalar_plant(0.0);
    let cost = CostSpec::finite(dmatrix![1.0], dmatrix![1.0], dmatrix![0.0], 3.0);
    assert!(solve_finite_horizon(&aug, &cost, &[0.0, 1.0, 2.0]).is_err());
    assert!(solve_finite_horizon(&aug, &cost, &[0.0, 2.0, 1.0, 3.0]).is_err());
}

#[test]
fn stationary_spring_uses_the_force_estimate() {
    let aug = spring_aug(true);
    let sol = solve_stationary(&aug, &spring_cost()).unwrap();
    assert!(sol.latent_gain().amax() > 1e-3);
    let expected = aug.m.transpose() * sol.p.as_matrix();
    assert!(max_diff(&sol.gain, &expected) <= 1e-10);
    assert!(spectral_abscissa(&(&aug.a - &aug.m * &sol.gain)) < 0.0);
}

#[test]
fn stationary_uncoupled_gain_is_basic_gain() {
    let aug = spring_aug(false);
    let full = solve_stationary(&aug, &spring_cost()).unwrap();
    let basic = basic_lqr_gain(&aug, &spring_cost()).unwrap();
    assert!(max_diff(&full.gain, &basic.gain) < 1e-8);
    assert!(full.latent_gain().amax() < 1e-8);
}

#[test]
fn unstable_scalar_gain() {
    let aug = scalar_plant(1.0);
    let sol = solve_stationary(&aug, &CostSpec::stationary(dmatrix![1.0], dmatrix![1.0])).unwrap();
    assert_relative_eq!(sol.gain[(0, 0)], 1.0 + 2f64.sqrt(), epsilon = 1e-10);
}

#[test]
fn unstabilizable_plant_is_rejected() {
    let mut phys = build_spring(0.1, 1.0).unwrap();
    phys.af = dmatrix![1.0, 0.0; 0.0, -1.0];
    phys.mf = dmatrix![0.0; 1.0];
    let aug = augment(&phys, &[realize(&CovarianceSpec::matern_half(1.0, 2.0)).unwrap()]).unwrap();
    let r = solve_stationary(&aug, &spring_cost());
    assert!(matches!(r, Err(LfmError::NotStabilizable { .. })));
}

#[test]
fn sylvester_gain_matches_full_riccati() {
    for spec in [
        CovarianceSpec::matern_half(1.0, 2.0),
        CovarianceSpec::matern32(0.7, 1.3),
        CovarianceSpec::matern52(2.0, 0.5),
    ] {
        let phys = build_spring(0.1, 1.0).unwrap();
        let aug = augment(&phys, &[realize(&spec).unwrap()]).unwrap();
        let full = solve_stationary(&aug, &spring_cost()).unwrap();
        let split = gain_via_sylvester(&aug, &spring_cost()).unwrap();
        assert!(max_diff(&full.gain, &split.gain) <= 1e-8, "{spec:?}");
        assert!(max_diff(full.p.as_matrix(), split.p.as_matrix()) <= 1e-7, "{spec:?}");
    }
}

#[test]
fn sylvester_cross_block_is_linear_in_coupling() {
    let aug = spring_aug(true);
    let base = gain_via_sylvester(&aug, &spring_cost()).unwrap();
    let mut scaled = aug.clone();
    scaled.a.view_mut((0, 2), (2, 1)).scale_mut(-2.5);
    let other = gain_via_sylvester(&scaled, &spring_cost()).unwrap();
    assert!(max_diff(&(base.p12() * -2.5), &other.p12()) < 1e-12);

    let uncoupled = gain_via_sylvester(&spring_aug(false), &spring_cost()).unwrap();
    assert_eq!(uncoupled.p12().amax(), 0.0);
}

#[test]
fn basic_gain_shares_the_physical_block() {
    let aug = spring_aug(true);
    let basic = basic_lqr_gain(&aug, &spring_cost()).unwrap();
    let split = gain_via_sylvester(&aug, &spring_cost()).unwrap();
    assert_eq!(basic.physical_gain(), split.physical_gain());
    assert_eq!(basic.latent_gain().amax(), 0.0);
    let closed = aug.af() - aug.mf() * basic.physical_gain();
    assert!(spectral_abscissa(&closed) < 0.0);
}

#[test]
fn mode_blocks_match_dense_riccati() {
    let domain = Rect::UNIT;
    let cfg = HeatConfig {
        diffusivity: 0.001,
        decay: 0.2,
        modes_per_axis: 2,
        domain,
        sensors: HeatConfig::interior_grid(domain, 2),
        space_ell: 0.1,
    };
    let phys = build_heat_fourier(&cfg).unwrap();
    let spec = CovarianceSpec::matern32(1.0, 1.0);
    let aug = augment(&phys, &vec![realize(&spec).unwrap(); 4]).unwrap();
    assert!(aug.block_structure.is_some());
    let cost = CostSpec::stationary(DMatrix::identity(4, 4), DMatrix::identity(4, 4) * 0.5);
    let blocked = solve_stationary(&aug, &cost).unwrap();
    let mut dense = aug.clone();
    dense.block_structure = None;
    let reference = solve_stationary(&dense, &cost).unwrap();
    assert!(max_diff(&blocked.gain, &reference.gain) < 1e-8);
    let split = gain_via_sylvester(&aug, &cost).unwrap();
    assert!(max_diff(&split.gain, &reference.gain) < 1e-8);
}

fn spring_scenario_run(gain: Option<&DMatrix<f64>>, control_on: f64, amplitude: f64, noise: f64) -> ClosedLoopRecord {
    let phys = build_spring(0.1, 1.0).unwrap();
    let aug = spring_aug(true);
    let force = move |t: f64| DVector::from_element(1, amplitude * ((0.23 * t).sin() + (0.13 * t).sin()));
    let scenario = Scenario { plant: &phys, force: &force, initial_state: DVector::zeros(2), noise_std: noise };
    let meas = MeasurementModel::isotropic(aug.c.clone(), 0.01).unwrap();
    let prior = GaussianBelief::stationary_prior(&aug, 100.0);
    let schedule = Schedule { t0: 0.0, horizon: 20.0, dt_meas: 0.1, dt_sim: 0.01, control_on };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    closed_loop_simulate(&scenario, &aug, gain, &meas, &prior, &schedule, &mut rng).unwrap()
}

#[test]
fn equilibrium_stays_at_rest() {
    let gain = solve_stationary(&spring_aug(true), &spring_cost()).unwrap().gain;
    let rec = spring_scenario_run(Some(&gain), 0.0, 0.0, 0.0);
    assert!(rec.f_true.iter().all(|f| f.amax() == 0.0));
    assert!(rec.controls.iter().all(|c| c.amax() == 0.0));
    assert_eq!(rec.tracking_error, 0.0);
}

#[test]
fn inactive_controller_reproduces_open_loop() {
    let gain = solve_stationary(&spring_aug(true), &spring_cost()).unwrap().gain;
    let open = spring_scenario_run(None, 0.0, 1.0, 0.01);
    let late = spring_scenario_run(Some(&gain), 25.0, 1.0, 0.01);
    assert_eq!(open.f_true, late.f_true);
    assert_eq!(open.f_est, late.f_est);
    assert_eq!(open.observations, late.observations);
}

#[test]
fn force_feedback_tracks_better() {
    let aug = spring_aug(true);
    let cost = CostSpec::stationary(dmatrix![1.0, 0.0; 0.0, 0.0], dmatrix![0.1]);
    let lfm = solve_stationary(&aug, &cost).unwrap().gain;
    let basic = basic_lqr_gain(&aug, &cost).unwrap().gain;
    let a = spring_scenario_run(Some(&lfm), 5.0, 1.0, 0.01);
    let b = spring_scenario_run(Some(&basic), 5.0, 1.0, 0.01);
    assert!(a.tracking_error < b.tracking_error, "{} vs {}", a.tracking_error, b.tracking_error);
}

#[test]
fn schedule_must_nest_steps() {
    let s = Schedule { t0: 0.0, horizon: 1.0, dt_meas: 0.1, dt_sim: 0.03, control_on: 0.0 };
    assert!(s.substeps().is_err());
    let s = Schedule { dt_sim: 0.01, ..s };
    assert_eq!(s.substeps().unwrap(), 10);
    assert_eq!(s.times().len(), 11);
}

#[test]
fn open_loop_simulation_matches_uncontrolled_closed_loop() {
    let phys = build_spring(0.1, 1.0).unwrap();
    let force = |t: f64| DVector::from_element(1, (0.23 * t).sin() + (0.13 * t).sin());
    let scenario = Scenario { plant: &phys, force: &force, initial_state: DVector::zeros(2), noise_std: 0.01 };
    let schedule = Schedule { t0: 0.0, horizon: 20.0, dt_meas: 0.1, dt_sim: 0.01, control_on: 0.0 };
    let data = simulate_open_loop(&scenario, &schedule, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let rec = spring_scenario_run(None, 0.0, 1.0, 0.01);
    assert_eq!(data.f_true, rec.f_true);
    assert_eq!(data.observations, rec.observations);
}
