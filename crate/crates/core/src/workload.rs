//! Per-offload demand sampling and split-ratio interpolation.
//!
//! Raw draws describe a whole frame processed entirely on one side: the
//! full image upload, the full on-vehicle compute time, and the full edge
//! compute time at unit server speed. [`split`] turns a raw draw into the
//! stage counters of one offload for a given split ratio.

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean and standard deviation of a truncated Gaussian quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

impl Gaussian {
    pub const fn new(mean: f64, std: f64) -> Self {
        Self { mean, std }
    }

    pub const fn constant(value: f64) -> Self {
        Self { mean: value, std: 0.0 }
    }

    /// One draw, truncated below at 1% of the mean.
    ///
    /// Always consumes exactly one Gaussian sample from `rng`, even when
    /// `std` is zero, so stream positions do not depend on the stats.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rand_distr::StandardNormal.sample(rng);
        if self.std == 0.0 {
            return self.mean;
        }
        let x = self.mean + self.std * z;
        x.max(0.01 * self.mean)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.mean > 0.0 && self.mean.is_finite()) || !(self.std >= 0.0 && self.std.is_finite()) {
            return Err(Error::Config(format!(
                "workload.{name}: mean must be positive and std non-negative (got {} / {})",
                self.mean, self.std
            )));
        }
        Ok(())
    }
}

/// Measured workload statistics, sizes in kilobytes (1 KB = 1000 bytes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadStats {
    pub image_kb: Gaussian,
    pub edge_full_ms: Gaussian,
    pub local_full_ms: Gaussian,
    pub update_kb: Gaussian,
    /// Uplink payload when the whole frame is processed on the vehicle.
    pub min_uplink_kb: f64,
}

impl Default for WorkloadStats {
    fn default() -> Self {
        Self {
            image_kb: Gaussian::new(353.5, 22.7),
            edge_full_ms: Gaussian::new(286.54, 68.89),
            local_full_ms: Gaussian::new(609.27, 165.44),
            update_kb: Gaussian::constant(50.0),
            min_uplink_kb: 35.0,
        }
    }
}

impl WorkloadStats {
    pub fn validate(&self) -> Result<()> {
        self.image_kb.validate("image_kb")?;
        self.edge_full_ms.validate("edge_full_ms")?;
        self.local_full_ms.validate("local_full_ms")?;
        self.update_kb.validate("update_kb")?;
        if !(self.min_uplink_kb >= 0.0 && self.min_uplink_kb.is_finite()) {
            return Err(Error::Config("workload.min_uplink_kb must be non-negative".into()));
        }
        Ok(())
    }
}

/// One frame's full-size demands, before splitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawDemand {
    pub image_bytes: f64,
    pub local_full_ms: f64,
    pub edge_full_ms: f64,
    pub update_bytes: f64,
    pub min_uplink_bytes: f64,
}

impl RawDemand {
    /// Scales the on-vehicle compute time, e.g. for a faster or slower CPU.
    pub fn with_local_scale(mut self, factor: f64) -> Self {
        self.local_full_ms *= factor;
        self
    }
}

/// Stage counters of one offload after splitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskDemands {
    pub local_ms: f64,
    pub uplink_bytes: f64,
    pub edge_ms_at_unit_capacity: f64,
    pub broadcast_bytes: f64,
}

/// Draws one frame. Consumes four Gaussian samples in a fixed order.
pub fn sample_demands<R: Rng + ?Sized>(stats: &WorkloadStats, rng: &mut R) -> RawDemand {
    let image_kb = stats.image_kb.sample(rng);
    let local_full_ms = stats.local_full_ms.sample(rng);
    let edge_full_ms = stats.edge_full_ms.sample(rng);
    let update_kb = stats.update_kb.sample(rng);
    RawDemand {
        image_bytes: image_kb * 1000.0,
        local_full_ms,
        edge_full_ms,
        update_bytes: update_kb * 1000.0,
        min_uplink_bytes: stats.min_uplink_kb * 1000.0,
    }
}

/// Applies split ratio `a` (fraction of computation kept on the vehicle).
pub fn split(demand: &RawDemand, a: f64) -> Result<TaskDemands> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::InvalidSplit(a));
    }
    Ok(TaskDemands {
        local_ms: a * demand.local_full_ms,
        uplink_bytes: (1.0 - a) * demand.image_bytes + a * demand.min_uplink_bytes,
        edge_ms_at_unit_capacity: (1.0 - a) * demand.edge_full_ms,
        broadcast_bytes: demand.update_bytes,
    })
}
