use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn lfm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfm")).args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(out: Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].to_string()).collect()
}

const SHORT_SPRING: &str = "
[spring]
train_end = 10.0
meas_end = 15.0
control_on = 10.0
horizon = 20.0
dt = 0.05
dt_sim = 0.005
fit_max_iter = 40
";

#[test]
fn kernel_check_writes_table_summary_and_manifest() {
    let tmp = TempDir::new().unwrap();
    ok(lfm(&["kernel-check", "--out", "k"], tmp.path()));
    let dir = tmp.path().join("k");
    let summary = json(&dir.join("summary.json"));
    assert!(summary["max_relative_error"].as_f64().unwrap() <= 0.01);
    assert_eq!(summary["state_dim"], 8);
    assert_eq!(csv_column(&dir.join("kernel.csv"), "tau").len(), 301);
    let manifest = fs::read_to_string(dir.join("manifest.toml")).unwrap();
    for key in ["library_version", "wall_time_seconds", "[config]", "command = \"kernel-check\""] {
        assert!(manifest.contains(key), "{manifest}");
    }
}

#[test]
fn certify_spring_and_uncoupled_variant() {
    let tmp = TempDir::new().unwrap();
    ok(lfm(&["certify", "--out", "a"], tmp.path()));
    let r = json(&tmp.path().join("a/certificate.json"));
    assert_eq!(r["controllable"], false);
    assert_eq!(r["output_controllable"], true);
    assert_eq!(r["observable"], true);
    assert_eq!(r["controllability"]["rank"], 2);
    assert_eq!(r["output_controllability"]["rank"], 2);
    assert_eq!(r["observability"]["rank"], 3);

    fs::write(tmp.path().join("cfg.toml"), "[certify]\ncoupled = false\n").unwrap();
    ok(lfm(&["certify", "--config", "cfg.toml", "--out", "b"], tmp.path()));
    let r = json(&tmp.path().join("b/certificate.json"));
    assert_eq!(r["observable"], false);
    assert_eq!(r["observability"]["rank"], 2);
}

#[test]
fn seeded_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("cfg.toml"), SHORT_SPRING).unwrap();
    for out in ["one", "two"] {
        ok(lfm(&["spring-control", "--config", "cfg.toml", "--seed", "5", "--out", out], tmp.path()));
    }
    for file in ["basic.csv", "lfm.csv", "summary.json"] {
        let a = fs::read(tmp.path().join("one").join(file)).unwrap();
        let b = fs::read(tmp.path().join("two").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
    ok(lfm(&["spring-control", "--config", "cfg.toml", "--seed", "6", "--out", "three"], tmp.path()));
    assert_ne!(
        fs::read(tmp.path().join("one/basic.csv")).unwrap(),
        fs::read(tmp.path().join("three/basic.csv")).unwrap()
    );
}

#[test]
fn inactive_control_reproduces_open_loop_run() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("cfg.toml"), SHORT_SPRING.replace("control_on = 10.0", "control_on = 20.0")).unwrap();
    ok(lfm(&["spring-open-loop", "--config", "cfg.toml", "--out", "open"], tmp.path()));
    ok(lfm(&["spring-control", "--config", "cfg.toml", "--out", "ctrl"], tmp.path()));
    let open = csv_column(&tmp.path().join("open/trajectory.csv"), "f_true");
    let closed = csv_column(&tmp.path().join("ctrl/basic.csv"), "f_true_position");
    assert_eq!(open, closed);
    let lfm_run = csv_column(&tmp.path().join("ctrl/lfm.csv"), "f_true_position");
    assert_eq!(open, lfm_run);
}

#[test]
fn heat_control_writes_requested_snapshots() {
    let tmp = TempDir::new().unwrap();
    let cfg = "[heat]\nmodes_per_axis = 2\nsensors_per_axis = 3\nhorizon = 1.0\nfield_grid = 5\n";
    fs::write(tmp.path().join("cfg.toml"), cfg).unwrap();
    ok(lfm(&["heat-control", "--config", "cfg.toml", "--snapshot-times", "0.5,1", "--out", "h"], tmp.path()));
    let dir = tmp.path().join("h");
    for name in ["snapshot_lfm_t0.5.csv", "snapshot_basic_t1.csv", "snapshot_uncontrolled_t0.5.csv", "max_temperature.csv"] {
        assert!(dir.join(name).exists(), "{name} missing");
    }
    assert_eq!(csv_column(&dir.join("snapshot_lfm_t0.5.csv"), "x").len(), 25);
    assert_eq!(json(&dir.join("summary.json"))["state_dim"], 4 * 5);
}

#[test]
fn invalid_configuration_fails_without_outputs() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.toml"), "[spring]\ntrain_end = 80.0\nmeas_end = 60.0\n").unwrap();
    let out = lfm(&["spring-open-loop", "--config", "bad.toml", "--out", "x"], tmp.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("train_end"));
    assert!(!tmp.path().join("x").exists());

    fs::write(tmp.path().join("typo.toml"), "[spring]\nlamda = 0.1\n").unwrap();
    let out = lfm(&["spring-open-loop", "--config", "typo.toml", "--out", "y"], tmp.path());
    assert!(!out.status.success());
    assert!(!tmp.path().join("y").exists());
}
