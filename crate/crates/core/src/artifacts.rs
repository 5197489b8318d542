//! Output directories, run manifests and CSV writers.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::date::{ControllerTrajectory, EpochRecord, EvaluationResult, SweepRow, STAGE_NAMES};
use crate::error::Result;
use crate::stats;

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_version: String,
    pub subcommand: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config_toml: String,
    pub overrides: Vec<String>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(subcommand: &str, seed: u64, cfg: &ScenarioConfig, overrides: &[String]) -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            seed,
            config_sha256: cfg.hash(),
            config_toml: cfg.to_toml_string(),
            overrides: overrides.to_vec(),
            files: Vec::new(),
        }
    }

    pub fn config(&self) -> Result<ScenarioConfig> {
        ScenarioConfig::from_toml_str(&self.config_toml)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?)
    }
}

/// `<root>/<subcommand>-<unix seconds>-seed<seed>`, suffixed on collision.
pub fn run_dir(root: &Path, subcommand: &str, seed: u64) -> Result<PathBuf> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let base = format!("{subcommand}-{secs}-seed{seed}");
    let mut dir = root.join(&base);
    let mut k = 1;
    while dir.exists() {
        dir = root.join(format!("{base}-{k}"));
        k += 1;
    }
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

pub fn write_training_curve(path: &Path, curve: &[EpochRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["epoch", "mean_latency_ms", "mean_reward", "clip_fraction", "mean_ratio", "value_loss", "exploration_std", "update_steps"])?;
    for r in curve {
        w.write_record([
            r.epoch.to_string(),
            r.mean_latency_ms.to_string(),
            r.mean_reward.to_string(),
            r.clip_fraction.to_string(),
            r.mean_ratio.to_string(),
            r.value_loss.to_string(),
            r.exploration_std.to_string(),
            r.update_steps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory(path: &Path, t: &ControllerTrajectory) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["window", "phase", "x_uplink", "x_downlink", "x_compute", "lambda", "l_h_ms", "weighted_usage", "censored"])?;
    for r in &t.windows {
        w.write_record([
            r.window.to_string(),
            r.phase.to_string(),
            r.reservation.uplink.to_string(),
            r.reservation.downlink.to_string(),
            r.reservation.compute.to_string(),
            r.lambda.to_string(),
            r.l_h_ms.to_string(),
            r.usage.to_string(),
            r.censored.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per approach: reservation, usage and the latency it achieved.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageRow {
    pub approach: String,
    pub reservation: crate::Reservation,
    pub usage: f64,
    pub l_h_ms: f64,
}

pub fn write_usage(path: &Path, rows: &[UsageRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["approach", "x_uplink", "x_downlink", "x_compute", "weighted_usage", "l_h_ms"])?;
    for r in rows {
        w.write_record([
            r.approach.clone(),
            r.reservation.uplink.to_string(),
            r.reservation.downlink.to_string(),
            r.reservation.compute.to_string(),
            r.usage.to_string(),
            r.l_h_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cdf(path: &Path, results: &[EvaluationResult]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["policy", "latency_ms", "cdf"])?;
    for r in results {
        for (x, p) in stats::ecdf(&r.latencies()) {
            w.write_record([r.policy.clone(), x.to_string(), p.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_stages(path: &Path, results: &[EvaluationResult]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["policy", "stage", "mean_ms"])?;
    for r in results {
        for (name, v) in STAGE_NAMES.iter().zip(r.stage_means_ms()) {
            w.write_record([r.policy.clone(), name.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["n_vehicles", "date_usage", "virtualedge_usage", "baseline_usage", "date_l_h_ms", "gap"])?;
    for r in rows {
        w.write_record([
            r.n_vehicles.to_string(),
            r.date_usage.to_string(),
            r.virtualedge_usage.to_string(),
            r.baseline_usage.to_string(),
            r.date_l_h_ms.to_string(),
            r.gap.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_reconstructs_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ScenarioConfig::default();
        cfg.training.epochs = 3;
        let m = Manifest::new("train", 7, &cfg, &["training.epochs=3".into()]);
        m.write(dir.path()).unwrap();
        let back = Manifest::read(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.config().unwrap(), cfg);
        assert_eq!(back.config().unwrap().hash(), back.config_sha256);
    }

    #[test]
    fn run_dirs_do_not_collide() {
        let root = tempfile::tempdir().unwrap();
        let a = run_dir(root.path(), "train", 1).unwrap();
        let b = run_dir(root.path(), "train", 1).unwrap();
        assert_ne!(a, b);
        assert!(a.is_dir() && b.is_dir());
    }
}
