//! One runner per subcommand: compute in memory, then write the outputs.

use anyhow::Result;
use lfm_core::control::ClosedLoopRecord;
use lfm_core::experiments::{
    run_certify, run_heat_control, run_kernel_check, run_spring_control, run_spring_open_loop, HeatExperimentConfig,
    KernelCheckConfig, SpringConfig,
};
use lfm_core::infer::FitResult;
use lfm_core::experiments::CertifyConfig;
use serde_json::{json, Value};

use crate::output::OutputDir;

/// Results held in memory until every computation has succeeded.
pub enum Outcome {
    SpringOpenLoop(lfm_core::experiments::SpringOpenLoopResult),
    SpringControl(lfm_core::experiments::SpringControlResult, Vec<String>),
    HeatControl(lfm_core::experiments::HeatResult),
    KernelCheck(lfm_core::experiments::KernelCheckResult),
    Certify(lfm_core::systheory::CertificationReport),
}

pub fn spring_open_loop(cfg: &SpringConfig) -> Result<Outcome> {
    Ok(Outcome::SpringOpenLoop(run_spring_open_loop(cfg)?))
}

pub fn spring_control(cfg: &SpringConfig) -> Result<Outcome> {
    let labels = lfm_core::build_spring(cfg.lambda, cfg.gamma)?.state_labels;
    Ok(Outcome::SpringControl(run_spring_control(cfg)?, labels))
}

pub fn heat_control(cfg: &HeatExperimentConfig) -> Result<Outcome> {
    Ok(Outcome::HeatControl(run_heat_control(cfg)?))
}

pub fn kernel_check(cfg: &KernelCheckConfig) -> Result<Outcome> {
    Ok(Outcome::KernelCheck(run_kernel_check(cfg)?))
}

pub fn certify(cfg: &CertifyConfig) -> Result<Outcome> {
    Ok(Outcome::Certify(run_certify(cfg)?))
}

fn fit_summary(fit: &Option<FitResult>) -> Value {
    match fit {
        Some(f) => json!({
            "sigma": f.spec.sigma,
            "ell": f.spec.ell,
            "log_likelihood": f.log_likelihood,
            "iterations": f.iterations,
            "evaluations": f.evaluations,
            "starts": f.starts,
        }),
        None => Value::Null,
    }
}

fn matrix_rows(m: &lfm_core::DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn max_abs(values: impl Iterator<Item = f64>) -> f64 {
    values.map(f64::abs).fold(0.0, f64::max)
}

fn write_record(out: &mut OutputDir, name: &str, rec: &ClosedLoopRecord, labels: &[String]) -> Result<()> {
    let mut header = vec!["t".to_string()];
    for prefix in ["f_true", "f_est", "f_var"] {
        header.extend(labels.iter().map(|l| format!("{prefix}_{l}")));
    }
    let channels = rec.u_true.first().map_or(0, |u| u.len());
    let controls = rec.controls.first().map_or(0, |c| c.len());
    let suffix = |base: &str, i: usize, n: usize| if n == 1 { base.to_string() } else { format!("{base}_{i}") };
    for base in ["u_true", "u_est", "u_var"] {
        header.extend((0..channels).map(|i| suffix(base, i, channels)));
    }
    header.extend((0..controls).map(|i| suffix("c", i, controls)));
    let rows = (0..rec.times.len()).map(|k| {
        let mut row = vec![rec.times[k]];
        for v in [&rec.f_true[k], &rec.f_est[k], &rec.f_var[k], &rec.u_true[k], &rec.u_est[k], &rec.u_var[k], &rec.controls[k]] {
            row.extend(v.iter().copied());
        }
        row
    });
    out.write_csv(name, &header, rows)
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

pub fn write(outcome: &Outcome, out: &mut OutputDir) -> Result<()> {
    match outcome {
        Outcome::SpringOpenLoop(r) => {
            out.write_csv(
                "trajectory.csv",
                &header(&["t", "f_true", "f_est", "f_std", "u_true", "u_est", "u_std"]),
                r.rows.iter().map(|x| vec![x.t, x.f_true, x.f_est, x.f_std, x.u_true, x.u_est, x.u_std]),
            )?;
            out.write_json(
                "summary.json",
                &json!({
                    "spec": r.spec,
                    "fit": fit_summary(&r.fit),
                    "rmse": {
                        "u_measured": r.u_rmse_measured,
                        "u_extrapolated": r.u_rmse_extrapolated,
                        "f_measured": r.f_rmse_measured,
                        "f_extrapolated": r.f_rmse_extrapolated,
                    },
                }),
            )
        }
        Outcome::SpringControl(r, labels) => {
            write_record(out, "basic.csv", &r.basic, labels)?;
            write_record(out, "lfm.csv", &r.lfm, labels)?;
            let summary = |rec: &ClosedLoopRecord, gain| {
                json!({
                    "tracking_error": rec.tracking_error,
                    "control_energy": rec.control_energy,
                    "max_abs_control": max_abs(rec.controls.iter().flat_map(|c| c.iter().copied())),
                    "gain": matrix_rows(gain),
                })
            };
            out.write_json(
                "summary.json",
                &json!({
                    "spec": r.spec,
                    "fit": fit_summary(&r.fit),
                    "basic": summary(&r.basic, &r.basic_gain),
                    "lfm": summary(&r.lfm, &r.lfm_gain),
                    "error_ratio": r.error_ratio,
                    "max_abs_force": max_abs(r.lfm.u_true.iter().flat_map(|u| u.iter().copied())),
                }),
            )
        }
        Outcome::HeatControl(r) => {
            let mut cols = vec!["t".to_string()];
            cols.extend(r.runs.iter().map(|run| run.controller.clone()));
            out.write_csv(
                "max_temperature.csv",
                &cols,
                r.times.iter().enumerate().map(|(k, &t)| {
                    let mut row = vec![t];
                    row.extend(r.runs.iter().map(|run| run.max_temperature[k]));
                    row
                }),
            )?;
            for s in &r.snapshots {
                let name = format!("snapshot_{}_t{}.csv", s.controller, s.t);
                out.write_csv(
                    &name,
                    &header(&["x", "y", "temperature", "temperature_est", "source", "source_est", "control"]),
                    r.grid_points.iter().enumerate().map(|(i, p)| {
                        vec![p[0], p[1], s.temperature[i], s.temperature_est[i], s.source[i], s.source_est[i], s.control[i]]
                    }),
                )?;
            }
            let runs: Vec<Value> = r
                .runs
                .iter()
                .map(|run| {
                    json!({
                        "controller": run.controller,
                        "tracking_error": run.record.tracking_error,
                        "control_energy": run.record.control_energy,
                        "peak_max_temperature": run.max_temperature.iter().copied().fold(0.0, f64::max),
                    })
                })
                .collect();
            let snaps: Vec<Value> = r
                .snapshots
                .iter()
                .map(|s| json!({"controller": s.controller, "t": s.t, "control_source_inner": s.control_source_inner}))
                .collect();
            out.write_json("summary.json", &json!({"state_dim": r.state_dim, "runs": runs, "snapshots": snaps}))
        }
        Outcome::KernelCheck(r) => {
            out.write_csv(
                "kernel.csv",
                &header(&["tau", "k_exact", "k_statespace", "error"]),
                r.rows.iter().map(|x| vec![x.tau, x.k_exact, x.k_statespace, x.error]),
            )?;
            out.write_json(
                "summary.json",
                &json!({"spec": r.spec, "state_dim": r.state_dim, "max_relative_error": r.max_relative_error}),
            )
        }
        Outcome::Certify(report) => out.write_json("certificate.json", report),
    }
}
