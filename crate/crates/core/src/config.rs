//! Scenario configuration: a TOML document with one table per module.
//!
//! Unknown keys are rejected. Command-line overrides use dotted paths,
//! e.g. `training.epochs=20` or `reservation.weights=[1, 1, 2]`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::date::{BaselineConfig, EvaluationConfig, SweepConfig};
use crate::error::{Error, Result};
use crate::marl::{ObservationScaling, PpoConfig, RolloutSpec};
use crate::radio::{self, ChannelConfig, TraceConfig};
use crate::reserve::ControllerConfig;
use crate::simcore::{EdgeConfig, FleetConfig, SimSetup};
use crate::workload::WorkloadStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub n_vehicles: usize,
    /// Worst-case latency requirement.
    pub l_max_ms: f64,
    pub seed: u64,
    /// Abort a rollout when nothing completes for this long.
    pub stall_timeout_ms: u64,
    pub record_events: bool,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self { n_vehicles: 4, l_max_ms: 500.0, seed: 1, stall_timeout_ms: 60_000, record_events: false }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub channel: ChannelConfig,
    pub trace: TraceConfig,
    pub workload: WorkloadStats,
    pub edge: EdgeConfig,
    pub fleet: FleetConfig,
    pub observation: ObservationScaling,
    pub training: PpoConfig,
    pub reservation: ControllerConfig,
    pub baseline: BaselineConfig,
    pub evaluation: EvaluationConfig,
    pub sweep: SweepConfig,
}

impl ScenarioConfig {
    /// Parses and validates a document; parse errors carry line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a file (or the defaults when `path` is `None`) and applies
    /// `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        let base = Self::from_toml_str(&text).map_err(|e| match (path, e) {
            (Some(p), Error::Config(m)) => Error::Config(format!("{}: {m}", p.display())),
            (_, e) => e,
        })?;
        if overrides.is_empty() {
            return Ok(base);
        }
        let mut table: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let merged = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml_str(&merged).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("after overrides: {m}")),
            e => e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        if s.n_vehicles == 0 {
            return Err(Error::Config("scenario.n_vehicles must be at least 1".into()));
        }
        if !(s.l_max_ms > 0.0 && s.l_max_ms.is_finite()) {
            return Err(Error::Config("scenario.l_max_ms must be positive".into()));
        }
        self.channel.validate()?;
        self.trace.validate()?;
        self.workload.validate()?;
        self.fleet.validate()?;
        if self.edge.queues == 0 || !(self.edge.max_speedup > 0.0) {
            return Err(Error::Config("edge.queues and edge.max_speedup must be positive".into()));
        }
        for (name, [lo, hi]) in [
            ("cpu_ghz", self.observation.cpu_ghz),
            ("ram_gb", self.observation.ram_gb),
            ("speed_mps", self.observation.speed_mps),
            ("snr_db", self.observation.snr_db),
            ("workload_ms", self.observation.workload_ms),
        ] {
            if !(hi > lo) {
                return Err(Error::Config(format!("observation.{name}: upper bound must exceed lower bound")));
            }
        }
        self.training.validate()?;
        self.reservation.validate()?;
        self.baseline.validate()?;
        if self.sweep.vehicle_counts.contains(&0) {
            return Err(Error::Config("sweep.vehicle_counts must be positive".into()));
        }
        Ok(())
    }

    /// Canonical serialization: every field, defaults included.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn mobility(&self, seed: u64, n_vehicles: usize) -> Arc<radio::MobilityTrace> {
        Arc::new(radio::generate_trace(n_vehicles, self.trace.duration_ms, seed, &self.trace))
    }

    /// Simulator inputs for `n_vehicles` vehicles seeded by `seed`.
    pub fn sim_setup(&self, seed: u64, n_vehicles: usize) -> SimSetup {
        SimSetup {
            n_vehicles,
            channel: self.channel.clone(),
            workload: self.workload.clone(),
            edge: self.edge.clone(),
            fleet: self.fleet.clone(),
            trace: self.mobility(seed, n_vehicles),
            seed,
            record_events: self.scenario.record_events,
        }
    }

    pub fn rollout_spec(&self) -> RolloutSpec {
        RolloutSpec {
            scaling: self.observation.clone(),
            l_max_ms: self.scenario.l_max_ms,
            episode_length: self.training.episode_length,
            stall_timeout_ticks: self.scenario.stall_timeout_ms,
        }
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override `{spec}` has an empty key segment")));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{spec}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = ScenarioConfig::default();
        c.validate().unwrap();
        assert_eq!(c.scenario.n_vehicles, 4);
        assert_eq!(c.scenario.l_max_ms, 500.0);
        assert_eq!(c.reservation.window_offloads, 100);
        assert_eq!(c.reservation.warmup_windows, 40);
        assert_eq!(c.reservation.eta1, 0.02);
        assert_eq!(c.reservation.weights, [1.0; 3]);
    }

    #[test]
    fn empty_document_is_default() {
        assert_eq!(ScenarioConfig::from_toml_str("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn round_trip() {
        let text = "[scenario]\nn_vehicles = 6\n[training]\nepochs = 3\n[reservation]\nweights = [1.0, 2.0, 1.0]\n";
        let c = ScenarioConfig::from_toml_str(text).unwrap();
        let again = ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        assert_ne!(c.hash(), ScenarioConfig::default().hash());
    }

    #[test]
    fn unknown_key_reported_with_line() {
        let err = ScenarioConfig::from_toml_str("[scenario]\nn_vehicles = 4\nbogus = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn invalid_value_rejected() {
        assert!(ScenarioConfig::from_toml_str("[scenario]\nl_max_ms = -5.0\n").is_err());
        assert!(ScenarioConfig::from_toml_str("[training]\ngamma = 1.5\n").is_err());
    }

    #[test]
    fn overrides_apply() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.toml");
        std::fs::write(&p, "[scenario]\nn_vehicles = 3\n").unwrap();
        let c = ScenarioConfig::load(
            Some(&p),
            &[
                "training.epochs=7".into(),
                "reservation.weights=[1, 1, 2]".into(),
                "reservation.update_rule=as_printed".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.scenario.n_vehicles, 3);
        assert_eq!(c.training.epochs, 7);
        assert_eq!(c.reservation.weights, [1.0, 1.0, 2.0]);
        assert_eq!(c.reservation.update_rule, crate::reserve::UpdateRule::AsPrinted);
    }

    #[test]
    fn bad_override_rejected() {
        assert!(ScenarioConfig::load(None, &["training.nonexistent=1".into()]).is_err());
        assert!(ScenarioConfig::load(None, &["no_equals_sign".into()]).is_err());
        assert!(ScenarioConfig::load(None, &["scenario.n_vehicles.x=1".into()]).is_err());
    }
}
