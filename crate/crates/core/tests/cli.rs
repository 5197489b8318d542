use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "trace.duration_ms=60000",
    "training.epochs=2",
    "training.transitions_per_epoch=40",
    "training.minibatch=20",
    "training.update_epochs=2",
    "training.hidden=[8, 8]",
    "evaluation.panel_reservations=2",
    "evaluation.panel_offloads=20",
    "reservation.warmup_windows=3",
    "reservation.guided_windows=3",
    "reservation.window_offloads=10",
    "baseline.calibration_windows=1",
    "baseline.grid_step=0.25",
];

fn run(out: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_edge-offload"));
    cmd.arg("--out").arg(out).arg("--seed").arg("3");
    for s in TINY {
        cmd.arg("--set").arg(s);
    }
    cmd.args(args).output().expect("binary runs")
}

fn run_ok(out: &Path, args: &[&str]) -> PathBuf {
    let o = run(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(String::from_utf8(o.stdout).unwrap().trim())
}

#[test]
fn unknown_config_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[scenario]\nn_vehicles = 4\nbogus = 1\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_edge-offload"))
        .arg("--out")
        .arg(dir.path().join("runs"))
        .arg("--config")
        .arg(&cfg)
        .arg("train")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bogus") && err.contains("line 3"), "{err}");
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn missing_checkpoint_fails_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let o = run(&out, &["reserve", "--checkpoint", "/nonexistent/policy.json"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not exist"));
    assert!(!out.exists());
}

#[test]
fn training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_ok(dir.path(), &["train"]);
    let b = run_ok(dir.path(), &["train"]);
    assert_ne!(a, b);
    for f in ["training_curve.csv", "policy.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let m = edge_offload::artifacts::Manifest::read(&a).unwrap();
    assert_eq!(m.seed, 3);
    assert_eq!(m.config().unwrap().training.epochs, 2);
    assert_eq!(std::fs::read_to_string(a.join("training_curve.csv")).unwrap().lines().count(), 3);
}

#[test]
fn full_local_spends_no_time_at_the_edge() {
    let dir = tempfile::tempdir().unwrap();
    let d = run_ok(dir.path(), &["evaluate", "--policy", "full_local"]);
    let stages = std::fs::read_to_string(d.join("stages.csv")).unwrap();
    let edge: Vec<f64> = stages
        .lines()
        .filter(|l| l.contains("edge_queue") || l.contains("edge_compute"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(edge, vec![0.0, 0.0]);
    assert!(d.join("latency_cdf.csv").exists());
}

#[test]
fn sweep_writes_one_row_per_count() {
    let dir = tempfile::tempdir().unwrap();
    let t = run_ok(dir.path(), &["train"]);
    let ckpt = t.join("policy.json");
    let d = run_ok(dir.path(), &["sweep-vehicles", "2..4", "--checkpoint", ckpt.to_str().unwrap()]);
    let rows = std::fs::read_to_string(d.join("sweep.csv")).unwrap();
    let counts: Vec<&str> = rows.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(counts, ["2", "3", "4"]);
}

#[test]
fn invalid_policy_name_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["baseline", "--policy", "sometimes"]);
    assert_eq!(o.status.code(), Some(2));
}
