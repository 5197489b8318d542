//! Radio access: UMi street-canyon LOS path loss, Shannon rates with equal
//! bandwidth sharing, and vehicle mobility traces.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Effective environment height for the breakpoint distance.
const ENV_HEIGHT_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub carrier_ghz: f64,
    pub max_bandwidth_uplink_hz: f64,
    pub max_bandwidth_downlink_hz: f64,
    pub tx_power_dbm: f64,
    pub noise_density_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub bs_height_m: f64,
    pub ut_height_m: f64,
    /// Log-normal shadowing standard deviation; 0 disables shadowing.
    pub shadowing_sigma_db: f64,
    /// Side of the square cells over which shadowing is held constant.
    pub shadowing_decorrelation_m: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            carrier_ghz: 3.5,
            max_bandwidth_uplink_hz: 5e6,
            max_bandwidth_downlink_hz: 5e6,
            tx_power_dbm: 23.0,
            noise_density_dbm_hz: -174.0,
            noise_figure_db: 9.0,
            bs_height_m: 10.0,
            ut_height_m: 1.5,
            shadowing_sigma_db: 4.0,
            shadowing_decorrelation_m: 10.0,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_ghz", self.carrier_ghz),
            ("max_bandwidth_uplink_hz", self.max_bandwidth_uplink_hz),
            ("max_bandwidth_downlink_hz", self.max_bandwidth_downlink_hz),
            ("bs_height_m", self.bs_height_m),
            ("ut_height_m", self.ut_height_m),
            ("shadowing_decorrelation_m", self.shadowing_decorrelation_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("channel.{name} must be positive (got {v})")));
            }
        }
        if !(self.shadowing_sigma_db >= 0.0) {
            return Err(Error::Config("channel.shadowing_sigma_db must be non-negative".into()));
        }
        Ok(())
    }

    pub fn max_bandwidth(&self, link: Link) -> f64 {
        match link {
            Link::Uplink => self.max_bandwidth_uplink_hz,
            Link::Downlink => self.max_bandwidth_downlink_hz,
        }
    }

    /// Breakpoint distance d'_BP in meters.
    pub fn breakpoint_m(&self) -> f64 {
        4.0 * (self.bs_height_m - ENV_HEIGHT_M)
            * (self.ut_height_m - ENV_HEIGHT_M)
            * self.carrier_ghz
            * 1e9
            / SPEED_OF_LIGHT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Uplink,
    Downlink,
}

/// LOS UMi street-canyon path loss in dB at ground distance `distance_m`.
///
/// Distances below 1 m are clamped to 1 m.
pub fn path_loss_db(distance_m: f64, cfg: &ChannelConfig) -> f64 {
    let d2d = distance_m.max(1.0);
    let dh = cfg.bs_height_m - cfg.ut_height_m;
    let d3d = (d2d * d2d + dh * dh).sqrt();
    let fc = cfg.carrier_ghz;
    let bp = cfg.breakpoint_m();
    if d2d <= bp {
        32.4 + 21.0 * d3d.log10() + 20.0 * fc.log10()
    } else {
        32.4 + 40.0 * d3d.log10() + 20.0 * fc.log10() - 9.5 * (bp * bp + dh * dh).log10()
    }
}

/// Shadow fading in dB at a position, constant within a decorrelation cell
/// and a pure function of (seed, cell).
pub fn shadowing_db(position: [f64; 2], cfg: &ChannelConfig) -> f64 {
    if cfg.shadowing_sigma_db == 0.0 {
        return 0.0;
    }
    let cx = (position[0] / cfg.shadowing_decorrelation_m).floor() as i64;
    let cy = (position[1] / cfg.shadowing_decorrelation_m).floor() as i64;
    let h = rng::derive_seed(cfg.seed, &[rng::SHADOWING, cx as u64, cy as u64]);
    // Box-Muller on two 53-bit uniforms taken from the hash.
    let u1 = ((h >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    let u2 = ((rng::mix64(h) >> 11) as f64) / (1u64 << 53) as f64;
    let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    cfg.shadowing_sigma_db * z
}

/// Path loss between a vehicle and the base station, shadowing included.
pub fn link_path_loss_db(vehicle: [f64; 2], base_station: [f64; 2], cfg: &ChannelConfig) -> f64 {
    let d = ((vehicle[0] - base_station[0]).powi(2) + (vehicle[1] - base_station[1]).powi(2)).sqrt();
    path_loss_db(d, cfg) + shadowing_db(vehicle, cfg)
}

/// Receiver SNR in dB when `bandwidth_hz` is allotted to the link.
pub fn snr_db(path_loss_db: f64, bandwidth_hz: f64, cfg: &ChannelConfig) -> f64 {
    let noise_dbm = cfg.noise_density_dbm_hz + 10.0 * bandwidth_hz.log10() + cfg.noise_figure_db;
    cfg.tx_power_dbm - path_loss_db - noise_dbm
}

/// Shannon rate in bit/s for a given allotted bandwidth.
pub fn shannon_rate(bandwidth_hz: f64, path_loss_db: f64, cfg: &ChannelConfig) -> f64 {
    if bandwidth_hz <= 0.0 {
        return 0.0;
    }
    let snr = 10f64.powf(snr_db(path_loss_db, bandwidth_hz, cfg) / 10.0);
    bandwidth_hz * (1.0 + snr).log2()
}

/// Equal share of the reserved bandwidth among `n_active` transmitters.
pub fn bandwidth_share(n_active: usize, reservation: f64, max_bandwidth_hz: f64) -> f64 {
    if n_active == 0 {
        return 0.0;
    }
    reservation * max_bandwidth_hz / n_active as f64
}

/// Data rate of every active vehicle; inactive vehicles are absent (zero).
///
/// `positions` is indexed by vehicle id.
pub fn per_vehicle_rate(
    active: &[usize],
    reservation: f64,
    positions: &[[f64; 2]],
    base_station: [f64; 2],
    link: Link,
    cfg: &ChannelConfig,
) -> BTreeMap<usize, f64> {
    let share = bandwidth_share(active.len(), reservation, cfg.max_bandwidth(link));
    active
        .iter()
        .map(|&v| {
            let pl = link_path_loss_db(positions[v], base_station, cfg);
            (v, shannon_rate(share, pl, cfg))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceConfig {
    /// Side of the square intersection region centred on the origin.
    pub region_m: f64,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    /// Lateral offset of a lane from the road centre line.
    pub lane_offset_m: f64,
    /// Trace length; positions wrap around past the end.
    pub duration_ms: u64,
    pub base_station: [f64; 2],
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            region_m: 200.0,
            speed_min_mps: 5.0,
            speed_max_mps: 15.0,
            lane_offset_m: 3.5,
            duration_ms: 300_000,
            base_station: [25.0, 25.0],
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.region_m > 0.0) || self.duration_ms == 0 {
            return Err(Error::Config("trace.region_m and trace.duration_ms must be positive".into()));
        }
        if !(self.speed_min_mps > 0.0 && self.speed_min_mps <= self.speed_max_mps) {
            return Err(Error::Config("trace speeds must satisfy 0 < speed_min_mps <= speed_max_mps".into()));
        }
        Ok(())
    }
}

/// One 1 ms sample of a vehicle track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub x: f32,
    pub y: f32,
    pub speed: f32,
}

/// Per-vehicle positions and speeds sampled every millisecond.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityTrace {
    pub base_station: [f64; 2],
    tracks: Vec<Vec<TraceSample>>,
}

impl MobilityTrace {
    pub fn new(base_station: [f64; 2], tracks: Vec<Vec<TraceSample>>) -> Result<Self> {
        if tracks.is_empty() {
            return Err(Error::Trace("trace has no vehicles".into()));
        }
        let len = tracks[0].len();
        if len == 0 || tracks.iter().any(|t| t.len() != len) {
            return Err(Error::Trace("every vehicle track must be non-empty and of equal length".into()));
        }
        Ok(Self { base_station, tracks })
    }

    pub fn n_vehicles(&self) -> usize {
        self.tracks.len()
    }

    pub fn len_ticks(&self) -> u64 {
        self.tracks[0].len() as u64
    }

    pub fn track(&self, vehicle: usize) -> &[TraceSample] {
        &self.tracks[vehicle]
    }

    /// Sample at `tick`, wrapping past the end of the trace.
    pub fn sample(&self, vehicle: usize, tick: u64) -> TraceSample {
        let t = &self.tracks[vehicle];
        t[(tick % t.len() as u64) as usize]
    }

    pub fn position(&self, vehicle: usize, tick: u64) -> [f64; 2] {
        let s = self.sample(vehicle, tick);
        [s.x as f64, s.y as f64]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["tick", "vehicle_id", "x", "y", "speed"])?;
        for tick in 0..self.len_ticks() {
            for (v, track) in self.tracks.iter().enumerate() {
                let s = track[tick as usize];
                out.write_record([
                    tick.to_string(),
                    v.to_string(),
                    s.x.to_string(),
                    s.y.to_string(),
                    s.speed.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads `tick,vehicle_id,x,y,speed` rows; ticks must be contiguous from 0.
    pub fn read_csv<R: Read>(r: R, base_station: [f64; 2]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            tick: u64,
            vehicle_id: usize,
            x: f32,
            y: f32,
            speed: f32,
        }
        let mut tracks: Vec<Vec<TraceSample>> = Vec::new();
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: Row = row?;
            if row.vehicle_id >= tracks.len() {
                tracks.resize_with(row.vehicle_id + 1, Vec::new);
            }
            let track = &mut tracks[row.vehicle_id];
            if row.tick != track.len() as u64 {
                return Err(Error::Trace(format!(
                    "vehicle {} expected tick {}, found {}",
                    row.vehicle_id,
                    track.len(),
                    row.tick
                )));
            }
            track.push(TraceSample { x: row.x, y: row.y, speed: row.speed });
        }
        Self::new(base_station, tracks)
    }
}

/// Synthetic intersection trace: each vehicle drives back and forth along one
/// of the two crossing roads, redrawing its speed at every turnaround.
pub fn generate_trace(n_vehicles: usize, duration_ms: u64, seed: u64, cfg: &TraceConfig) -> MobilityTrace {
    assert!(n_vehicles >= 1, "trace needs at least one vehicle");
    let half = cfg.region_m / 2.0;
    let tracks = (0..n_vehicles)
        .map(|v| {
            let mut r = rng::stream(seed, &[rng::TRACE, v as u64]);
            let horizontal = r.random_bool(0.5);
            let lane = if r.random_bool(0.5) { cfg.lane_offset_m } else { -cfg.lane_offset_m };
            let mut along = r.random_range(-half..half);
            let mut dir = if r.random_bool(0.5) { 1.0 } else { -1.0 };
            let mut speed = r.random_range(cfg.speed_min_mps..=cfg.speed_max_mps);
            let mut samples = Vec::with_capacity(duration_ms as usize);
            for _ in 0..duration_ms {
                if (along + dir * speed * 1e-3).abs() > half {
                    dir = -dir;
                    speed = r.random_range(cfg.speed_min_mps..=cfg.speed_max_mps);
                }
                let (x, y) = if horizontal { (along, lane) } else { (lane, along) };
                samples.push(TraceSample { x: x as f32, y: y as f32, speed: speed as f32 });
                along += dir * speed * 1e-3;
            }
            samples
        })
        .collect();
    MobilityTrace::new(cfg.base_station, tracks).expect("generated trace is well formed")
}
