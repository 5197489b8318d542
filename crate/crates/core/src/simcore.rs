//! Deterministic 1 ms time-driven offloading engine.
//!
//! Every offload walks through local compute, uplink, an edge FIFO queue,
//! edge compute and a downlink broadcast. All stage progress in a tick is
//! computed from the state at the start of that tick; transitions are
//! applied afterwards, so a task never advances in two stages within one
//! tick and a completed stage hands over at the next tick boundary.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::{self, ChannelConfig, Link, MobilityTrace};
use crate::rng::{self, StreamRng};
use crate::workload::{self, TaskDemands, WorkloadStats};

pub const TICK_MS: u64 = 1;

/// Reserved fractions of uplink bandwidth, downlink bandwidth and edge compute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reservation {
    pub uplink: f64,
    pub downlink: f64,
    pub compute: f64,
}

impl Reservation {
    pub const fn new(uplink: f64, downlink: f64, compute: f64) -> Self {
        Self { uplink, downlink, compute }
    }

    pub const fn full() -> Self {
        Self::new(1.0, 1.0, 1.0)
    }

    pub const fn uniform(x: f64) -> Self {
        Self::new(x, x, x)
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.uplink, self.downlink, self.compute]
    }

    /// Weighted total usage `sum_m alpha_m x_m`.
    pub fn usage(&self, weights: [f64; 3]) -> f64 {
        self.to_array().iter().zip(weights).map(|(x, w)| x * w).sum()
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|x| (0.0..=1.0).contains(x))
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> Self {
        Self::new(rng.random_range(lo..=hi), rng.random_range(lo..=hi), rng.random_range(lo..=hi))
    }
}

impl fmt::Display for Reservation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(up {:.3}, down {:.3}, cpu {:.3})", self.uplink, self.downlink, self.compute)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    LocalCompute,
    Uplink,
    EdgeQueue,
    EdgeCompute,
    Broadcast,
    Done,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::LocalCompute => "local",
            Stage::Uplink => "uplink",
            Stage::EdgeQueue => "edge_queue",
            Stage::EdgeCompute => "edge_compute",
            Stage::Broadcast => "broadcast",
            Stage::Done => "done",
        }
    }
}

/// Ticks spent in each stage of one offload.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageDurations {
    pub local: u64,
    pub uplink: u64,
    pub edge_queue: u64,
    pub edge_compute: u64,
    pub broadcast: u64,
}

impl StageDurations {
    pub fn total(&self) -> u64 {
        self.local + self.uplink + self.edge_queue + self.edge_compute + self.broadcast
    }

    fn add(&mut self, stage: Stage, ticks: u64) {
        match stage {
            Stage::LocalCompute => self.local += ticks,
            Stage::Uplink => self.uplink += ticks,
            Stage::EdgeQueue => self.edge_queue += ticks,
            Stage::EdgeCompute => self.edge_compute += ticks,
            Stage::Broadcast => self.broadcast += ticks,
            Stage::Done => {}
        }
    }
}

/// One vehicular offload in flight.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: u64,
    pub vehicle_id: usize,
    pub created_at: u64,
    pub stage: Stage,
    pub remaining_local_ms: f64,
    pub uplink_bytes_remaining: f64,
    pub remaining_edge_ms_at_unit_capacity: f64,
    pub broadcast_bytes_remaining: f64,
    pub split_ratio: f64,
    pub completed_at: Option<u64>,
    pub stage_entered_at: u64,
    pub queue: Option<usize>,
    pub durations: StageDurations,
}

impl Task {
    fn stage_work(&self, stage: Stage) -> f64 {
        match stage {
            Stage::LocalCompute => self.remaining_local_ms,
            Stage::Uplink => self.uplink_bytes_remaining,
            Stage::EdgeQueue | Stage::EdgeCompute => self.remaining_edge_ms_at_unit_capacity,
            Stage::Broadcast => self.broadcast_bytes_remaining,
            Stage::Done => 0.0,
        }
    }

    /// First stage at or after `from` that still has work.
    fn next_working_stage(&self, from: Stage) -> Stage {
        let order = [Stage::LocalCompute, Stage::Uplink, Stage::EdgeQueue, Stage::Broadcast];
        order
            .into_iter()
            .filter(|&s| s >= from)
            .find(|&s| self.stage_work(s) > 0.0)
            .unwrap_or(Stage::Done)
    }

    pub fn latency_ms(&self) -> Option<u64> {
        self.completed_at.map(|c| c - self.created_at)
    }
}

/// Builds a fresh task from split demands; the first stage is the first one
/// with non-zero work.
pub fn start_offload(task_id: u64, vehicle_id: usize, split_ratio: f64, demands: &TaskDemands, now: u64) -> Result<Task> {
    if !(0.0..=1.0).contains(&split_ratio) {
        return Err(Error::InvalidSplit(split_ratio));
    }
    let mut task = Task {
        id: task_id,
        vehicle_id,
        created_at: now,
        stage: Stage::LocalCompute,
        remaining_local_ms: demands.local_ms,
        uplink_bytes_remaining: demands.uplink_bytes,
        remaining_edge_ms_at_unit_capacity: demands.edge_ms_at_unit_capacity,
        broadcast_bytes_remaining: demands.broadcast_bytes,
        split_ratio,
        completed_at: None,
        stage_entered_at: now,
        queue: None,
        durations: StageDurations::default(),
    };
    task.stage = match task.next_working_stage(Stage::LocalCompute) {
        // A task with no work at all still occupies one broadcast tick.
        Stage::Done => Stage::Broadcast,
        s => s,
    };
    Ok(task)
}

/// Queue index with the least total remaining service; ties go to the
/// lowest index.
pub fn schedule_edge(loads: &[f64]) -> usize {
    let mut best = 0;
    for (i, &l) in loads.iter().enumerate().skip(1) {
        if l < loads[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdgeConfig {
    pub queues: usize,
    /// Service speed at full compute reservation, relative to unit capacity.
    pub max_speedup: f64,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self { queues: 4, max_speedup: 10.0 }
    }
}

/// Parallel FIFO service queues sharing one reserved compute fraction.
#[derive(Debug, Clone)]
pub struct EdgeServer {
    pub queues: Vec<VecDeque<u64>>,
    pub compute_capacity: f64,
    pub max_speedup: f64,
}

impl EdgeServer {
    pub fn new(cfg: &EdgeConfig, compute_capacity: f64) -> Self {
        Self {
            queues: vec![VecDeque::new(); cfg.queues.max(1)],
            compute_capacity,
            max_speedup: cfg.max_speedup,
        }
    }

    /// Unit-capacity milliseconds served per tick by each queue head.
    pub fn speed(&self) -> f64 {
        self.compute_capacity * self.max_speedup
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimClock {
    pub now: u64,
}

impl SimClock {
    pub const TICK_LENGTH_MS: u64 = TICK_MS;

    pub fn advance(&mut self) {
        self.now += Self::TICK_LENGTH_MS;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Enter,
    Exit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventRecord {
    pub tick: u64,
    pub task_id: u64,
    pub vehicle_id: usize,
    pub stage: Stage,
    pub kind: EventKind,
}

/// Ordered stage enter/exit records of every task.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub records: Vec<EventRecord>,
}

/// Latency decomposition of one task reconstructed from the log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayedTask {
    pub vehicle_id: usize,
    pub created_at: u64,
    pub completed_at: Option<u64>,
    pub durations: StageDurations,
}

impl EventLog {
    fn push(&mut self, tick: u64, task: &Task, stage: Stage, kind: EventKind) {
        self.records.push(EventRecord { tick, task_id: task.id, vehicle_id: task.vehicle_id, stage, kind });
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["tick", "task_id", "vehicle_id", "stage", "event"])?;
        for r in &self.records {
            let kind = match r.kind {
                EventKind::Enter => "enter",
                EventKind::Exit => "exit",
            };
            out.write_record([
                r.tick.to_string(),
                r.task_id.to_string(),
                r.vehicle_id.to_string(),
                r.stage.name().to_string(),
                kind.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Replays the log into per-task stage durations.
    pub fn replay(&self) -> BTreeMap<u64, ReplayedTask> {
        let mut open: BTreeMap<u64, u64> = BTreeMap::new();
        let mut tasks: BTreeMap<u64, ReplayedTask> = BTreeMap::new();
        for r in &self.records {
            let t = tasks.entry(r.task_id).or_insert(ReplayedTask {
                vehicle_id: r.vehicle_id,
                created_at: r.tick,
                completed_at: None,
                durations: StageDurations::default(),
            });
            match r.kind {
                EventKind::Enter => {
                    open.insert(r.task_id, r.tick);
                }
                EventKind::Exit => {
                    if let Some(entered) = open.remove(&r.task_id) {
                        t.durations.add(r.stage, r.tick - entered);
                    }
                    if r.stage == Stage::Broadcast {
                        t.completed_at = Some(r.tick);
                    }
                }
            }
        }
        tasks
    }
}

/// A finished offload as returned by [`Simulator::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletedTask {
    pub task_id: u64,
    pub vehicle_id: usize,
    pub split_ratio: f64,
    pub created_at: u64,
    pub completed_at: u64,
    pub durations: StageDurations,
}

impl CompletedTask {
    pub fn latency_ms(&self) -> f64 {
        (self.completed_at - self.created_at) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FleetConfig {
    pub cpu_ghz_min: f64,
    pub cpu_ghz_max: f64,
    /// CPU frequency at which the measured local compute times apply.
    pub reference_cpu_ghz: f64,
    pub ram_gb_choices: Vec<f64>,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self { cpu_ghz_min: 2.0, cpu_ghz_max: 3.0, reference_cpu_ghz: 2.5, ram_gb_choices: vec![4.0, 8.0, 16.0] }
    }
}

impl FleetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cpu_ghz_min > 0.0 && self.cpu_ghz_min <= self.cpu_ghz_max && self.reference_cpu_ghz > 0.0) {
            return Err(Error::Config("fleet CPU range must satisfy 0 < cpu_ghz_min <= cpu_ghz_max".into()));
        }
        if self.ram_gb_choices.is_empty() {
            return Err(Error::Config("fleet.ram_gb_choices must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Vehicle {
    pub id: usize,
    pub cpu_ghz: f64,
    pub ram_gb: f64,
    pub in_flight: Option<u64>,
    pub offloads_started: u64,
    demand_rng: StreamRng,
}

impl Vehicle {
    /// Local compute time multiplier relative to the reference CPU.
    pub fn local_scale(&self, fleet: &FleetConfig) -> f64 {
        fleet.reference_cpu_ghz / self.cpu_ghz
    }
}

/// Everything needed to build a simulator instance.
#[derive(Debug, Clone)]
pub struct SimSetup {
    pub n_vehicles: usize,
    pub channel: ChannelConfig,
    pub workload: WorkloadStats,
    pub edge: EdgeConfig,
    pub fleet: FleetConfig,
    pub trace: Arc<MobilityTrace>,
    pub seed: u64,
    pub record_events: bool,
}

/// The simulated world: vehicles, tasks in flight, edge server and radio.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub clock: SimClock,
    pub vehicles: Vec<Vehicle>,
    tasks: BTreeMap<u64, Task>,
    pub server: EdgeServer,
    reservation: Reservation,
    setup: SimSetup,
    pub log: EventLog,
    next_task_id: u64,
}

impl Simulator {
    pub fn new(setup: SimSetup, reservation: Reservation) -> Result<Self> {
        if setup.n_vehicles == 0 {
            return Err(Error::Config("at least one vehicle is required".into()));
        }
        if setup.trace.n_vehicles() < setup.n_vehicles {
            return Err(Error::Trace(format!(
                "trace covers {} vehicles, scenario needs {}",
                setup.trace.n_vehicles(),
                setup.n_vehicles
            )));
        }
        let vehicles = (0..setup.n_vehicles)
            .map(|id| {
                let mut hw = rng::stream(setup.seed, &[rng::HARDWARE, id as u64]);
                let cpu_ghz = hw.random_range(setup.fleet.cpu_ghz_min..=setup.fleet.cpu_ghz_max);
                let ram_gb = *setup.fleet.ram_gb_choices.choose(&mut hw).unwrap_or(&8.0);
                Vehicle {
                    id,
                    cpu_ghz,
                    ram_gb,
                    in_flight: None,
                    offloads_started: 0,
                    demand_rng: rng::stream(setup.seed, &[rng::DEMANDS, id as u64]),
                }
            })
            .collect();
        Ok(Self {
            clock: SimClock::default(),
            vehicles,
            tasks: BTreeMap::new(),
            server: EdgeServer::new(&setup.edge, reservation.compute),
            reservation,
            setup,
            log: EventLog::default(),
            next_task_id: 0,
        })
    }

    pub fn now(&self) -> u64 {
        self.clock.now
    }

    pub fn setup(&self) -> &SimSetup {
        &self.setup
    }

    pub fn reservation(&self) -> Reservation {
        self.reservation
    }

    pub fn set_reservation(&mut self, r: Reservation) {
        self.reservation = r;
        self.server.compute_capacity = r.compute;
    }

    pub fn tasks(&self) -> impl Iterator<Item = &Task> {
        self.tasks.values()
    }

    pub fn task(&self, id: u64) -> Option<&Task> {
        self.tasks.get(&id)
    }

    pub fn idle_vehicles(&self) -> Vec<usize> {
        self.vehicles.iter().filter(|v| v.in_flight.is_none()).map(|v| v.id).collect()
    }

    /// Total remaining unit-capacity service time of each edge queue.
    pub fn queue_loads(&self) -> Vec<f64> {
        self.server
            .queues
            .iter()
            .map(|q| q.iter().map(|id| self.tasks[id].remaining_edge_ms_at_unit_capacity).sum())
            .collect()
    }

    /// Server workload: total queued unit-capacity milliseconds.
    pub fn server_workload_ms(&self) -> f64 {
        self.queue_loads().iter().sum()
    }

    pub fn position(&self, vehicle: usize) -> [f64; 2] {
        self.setup.trace.position(vehicle, self.clock.now)
    }

    pub fn speed_mps(&self, vehicle: usize) -> f64 {
        self.setup.trace.sample(vehicle, self.clock.now).speed as f64
    }

    /// Uplink SNR in dB over the full uplink band at the current position.
    pub fn radio_quality_db(&self, vehicle: usize) -> f64 {
        let ch = &self.setup.channel;
        let pl = radio::link_path_loss_db(self.position(vehicle), self.setup.trace.base_station, ch);
        radio::snr_db(pl, ch.max_bandwidth_uplink_hz, ch)
    }

    /// Starts the next offload of `vehicle` at the current tick, drawing its
    /// demands from the vehicle's own stream.
    pub fn start_offload(&mut self, vehicle: usize, split_ratio: f64) -> Result<u64> {
        let v = self.vehicles.get(vehicle).ok_or(Error::UnknownVehicle(vehicle))?;
        if v.in_flight.is_some() {
            return Err(Error::VehicleBusy(vehicle));
        }
        if !(0.0..=1.0).contains(&split_ratio) {
            return Err(Error::InvalidSplit(split_ratio));
        }
        let scale = v.local_scale(&self.setup.fleet);
        let v = &mut self.vehicles[vehicle];
        let raw = workload::sample_demands(&self.setup.workload, &mut v.demand_rng).with_local_scale(scale);
        let demands = workload::split(&raw, split_ratio)?;
        self.insert_task(vehicle, split_ratio, &demands)
    }

    /// Starts an offload with explicit demands.
    pub fn insert_task(&mut self, vehicle: usize, split_ratio: f64, demands: &TaskDemands) -> Result<u64> {
        let now = self.clock.now;
        let v = self.vehicles.get_mut(vehicle).ok_or(Error::UnknownVehicle(vehicle))?;
        if v.in_flight.is_some() {
            return Err(Error::VehicleBusy(vehicle));
        }
        let id = self.next_task_id;
        let mut task = start_offload(id, vehicle, split_ratio, demands, now)?;
        v.in_flight = Some(id);
        v.offloads_started += 1;
        self.next_task_id += 1;
        if task.stage == Stage::EdgeQueue {
            self.enqueue_edge(&mut task, now);
        }
        if self.setup.record_events {
            self.log.push(now, &task, task.stage, EventKind::Enter);
        }
        self.tasks.insert(id, task);
        Ok(id)
    }

    fn enqueue_edge(&mut self, task: &mut Task, now: u64) {
        let loads = self.queue_loads();
        let q = schedule_edge(&loads);
        task.queue = Some(q);
        task.stage = if self.server.queues[q].is_empty() { Stage::EdgeCompute } else { Stage::EdgeQueue };
        task.stage_entered_at = now;
        self.server.queues[q].push_back(task.id);
    }

    /// Advances the world by one tick and returns the offloads completed in it.
    pub fn step(&mut self) -> Vec<CompletedTask> {
        let now = self.clock.now;
        let tick_s = TICK_MS as f64 * 1e-3;
        let mut finished: Vec<u64> = Vec::new();

        // Radio allotments are fixed by the set of non-empty buffers at tick start.
        let uplink_active: Vec<usize> =
            self.tasks.values().filter(|t| t.stage == Stage::Uplink).map(|t| t.vehicle_id).collect();
        let broadcasts = self.tasks.values().filter(|t| t.stage == Stage::Broadcast).count();
        let trace = &self.setup.trace;
        let ch = &self.setup.channel;
        let positions: Vec<[f64; 2]> = if uplink_active.is_empty() && broadcasts == 0 {
            Vec::new()
        } else {
            (0..self.vehicles.len()).map(|v| trace.position(v, now)).collect()
        };
        let uplink_rates = radio::per_vehicle_rate(
            &uplink_active,
            self.reservation.uplink,
            &positions,
            trace.base_station,
            Link::Uplink,
            ch,
        );
        // Broadcast reaches every vehicle, so it runs at the worst link's rate.
        let broadcast_rate = if broadcasts > 0 {
            let worst = positions
                .iter()
                .map(|&p| radio::link_path_loss_db(p, trace.base_station, ch))
                .fold(f64::NEG_INFINITY, f64::max);
            let share = radio::bandwidth_share(broadcasts, self.reservation.downlink, ch.max_bandwidth_downlink_hz);
            radio::shannon_rate(share, worst, ch)
        } else {
            0.0
        };
        let edge_speed = self.server.speed();
        let heads: Vec<u64> = self.server.queues.iter().filter_map(|q| q.front().copied()).collect();

        for task in self.tasks.values_mut() {
            let done = match task.stage {
                Stage::LocalCompute => {
                    task.remaining_local_ms -= TICK_MS as f64;
                    task.remaining_local_ms <= 0.0
                }
                Stage::Uplink => {
                    let rate = uplink_rates.get(&task.vehicle_id).copied().unwrap_or(0.0);
                    task.uplink_bytes_remaining -= rate * tick_s / 8.0;
                    task.uplink_bytes_remaining <= 0.0
                }
                Stage::EdgeCompute => {
                    debug_assert!(heads.contains(&task.id));
                    task.remaining_edge_ms_at_unit_capacity -= edge_speed * TICK_MS as f64;
                    task.remaining_edge_ms_at_unit_capacity <= 0.0
                }
                Stage::Broadcast => {
                    task.broadcast_bytes_remaining -= broadcast_rate * tick_s / 8.0;
                    task.broadcast_bytes_remaining <= 0.0
                }
                Stage::EdgeQueue | Stage::Done => false,
            };
            if done {
                finished.push(task.id);
            }
        }

        let boundary = now + TICK_MS;
        let mut completed = Vec::new();
        // Edge exits first so freed queues are visible to tasks entering the edge.
        finished.sort_by_key(|id| (self.tasks[id].stage != Stage::EdgeCompute, *id));
        for id in finished {
            let mut task = self.tasks.remove(&id).expect("finished task exists");
            let stage = task.stage;
            match stage {
                Stage::LocalCompute => task.remaining_local_ms = 0.0,
                Stage::Uplink => task.uplink_bytes_remaining = 0.0,
                Stage::EdgeCompute => task.remaining_edge_ms_at_unit_capacity = 0.0,
                Stage::Broadcast => task.broadcast_bytes_remaining = 0.0,
                _ => unreachable!("only working stages finish"),
            }
            task.durations.add(stage, boundary - task.stage_entered_at);
            if self.setup.record_events {
                self.log.push(boundary, &task, stage, EventKind::Exit);
            }
            if stage == Stage::EdgeCompute {
                let q = task.queue.expect("edge task has a queue");
                let popped = self.server.queues[q].pop_front();
                debug_assert_eq!(popped, Some(id));
                if let Some(&next) = self.server.queues[q].front() {
                    let nt = self.tasks.get_mut(&next).expect("queued task exists");
                    nt.durations.add(Stage::EdgeQueue, boundary - nt.stage_entered_at);
                    nt.stage = Stage::EdgeCompute;
                    nt.stage_entered_at = boundary;
                    if self.setup.record_events {
                        self.log.push(boundary, nt, Stage::EdgeQueue, EventKind::Exit);
                        self.log.push(boundary, nt, Stage::EdgeCompute, EventKind::Enter);
                    }
                }
            }
            let next = task.next_working_stage(match stage {
                Stage::LocalCompute => Stage::Uplink,
                Stage::Uplink => Stage::EdgeQueue,
                _ => Stage::Broadcast,
            });
            task.stage_entered_at = boundary;
            task.stage = next;
            match next {
                Stage::Done => {
                    task.completed_at = Some(boundary);
                    self.vehicles[task.vehicle_id].in_flight = None;
                    completed.push(CompletedTask {
                        task_id: task.id,
                        vehicle_id: task.vehicle_id,
                        split_ratio: task.split_ratio,
                        created_at: task.created_at,
                        completed_at: boundary,
                        durations: task.durations,
                    });
                }
                Stage::EdgeQueue => {
                    self.enqueue_edge(&mut task, boundary);
                    if self.setup.record_events {
                        self.log.push(boundary, &task, task.stage, EventKind::Enter);
                    }
                    self.tasks.insert(id, task);
                }
                _ => {
                    if self.setup.record_events {
                        self.log.push(boundary, &task, next, EventKind::Enter);
                    }
                    self.tasks.insert(id, task);
                }
            }
        }
        self.clock.advance();
        completed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::{generate_trace, TraceConfig};

    fn setup(n: usize, seed: u64) -> SimSetup {
        SimSetup {
            n_vehicles: n,
            channel: ChannelConfig::default(),
            workload: WorkloadStats::default(),
            edge: EdgeConfig::default(),
            fleet: FleetConfig::default(),
            trace: Arc::new(generate_trace(n, 20_000, seed, &TraceConfig::default())),
            seed,
            record_events: true,
        }
    }

    fn demands(local: f64, up: f64, edge: f64, bc: f64) -> TaskDemands {
        TaskDemands { local_ms: local, uplink_bytes: up, edge_ms_at_unit_capacity: edge, broadcast_bytes: bc }
    }

    #[test]
    fn one_ms_local_exhausts_in_one_step() {
        let mut sim = Simulator::new(setup(1, 0), Reservation::full()).unwrap();
        let id = sim.insert_task(0, 0.5, &demands(1.0, 1000.0, 10.0, 1000.0)).unwrap();
        assert_eq!(sim.task(id).unwrap().stage, Stage::LocalCompute);
        sim.step();
        assert_eq!(sim.task(id).unwrap().stage, Stage::Uplink);
        assert_eq!(sim.task(id).unwrap().remaining_local_ms, 0.0);
    }

    #[test]
    fn min_load_examples() {
        assert_eq!(schedule_edge(&[5.0, 2.0, 7.0]), 1);
        assert_eq!(schedule_edge(&[0.0, 0.0, 0.0, 0.0]), 0);
        assert_eq!(schedule_edge(&[3.0, 1.0, 1.0]), 1);
    }

    #[test]
    fn endpoints_pick_first_stage() {
        let all_edge = start_offload(0, 0, 0.0, &demands(0.0, 5.0, 5.0, 5.0), 3).unwrap();
        assert_eq!(all_edge.stage, Stage::Uplink);
        assert_eq!(all_edge.remaining_local_ms, 0.0);
        let all_local = start_offload(1, 0, 1.0, &demands(5.0, 5.0, 0.0, 5.0), 3).unwrap();
        assert_eq!(all_local.stage, Stage::LocalCompute);
        assert_eq!(all_local.next_working_stage(Stage::EdgeQueue), Stage::Broadcast);
    }

    #[test]
    fn full_local_skips_edge() {
        let mut sim = Simulator::new(setup(1, 0), Reservation::full()).unwrap();
        sim.insert_task(0, 1.0, &demands(3.0, 100.0, 0.0, 100.0)).unwrap();
        let mut done = Vec::new();
        while done.is_empty() {
            done = sim.step();
        }
        let d = done[0].durations;
        assert_eq!(d.local, 3);
        assert_eq!(d.edge_queue + d.edge_compute, 0);
        assert!(d.uplink >= 1 && d.broadcast >= 1);
    }

    #[test]
    fn second_concurrent_offload_rejected() {
        let mut sim = Simulator::new(setup(2, 0), Reservation::full()).unwrap();
        sim.start_offload(0, 0.3).unwrap();
        assert!(matches!(sim.start_offload(0, 0.3), Err(Error::VehicleBusy(0))));
        assert!(matches!(sim.start_offload(1, 1.3), Err(Error::InvalidSplit(_))));
        assert!(sim.start_offload(1, 0.3).is_ok());
        assert!(matches!(sim.start_offload(5, 0.3), Err(Error::UnknownVehicle(5))));
    }

    #[test]
    fn overlapping_edge_service_hand_simulated() {
        // Two vehicles with 1 ms of local work, tiny uplinks that finish in
        // one tick, 30 unit-ms of edge work each (3 ticks at full speed) and
        // a one-tick broadcast. Both occupy separate queues and are served in
        // the same ticks.
        let mut sim = Simulator::new(setup(2, 1), Reservation::full()).unwrap();
        let a = sim.insert_task(0, 0.5, &demands(1.0, 10.0, 30.0, 10.0)).unwrap();
        let b = sim.insert_task(1, 0.5, &demands(1.0, 10.0, 30.0, 10.0)).unwrap();
        let mut completions = Vec::new();
        for _ in 0..10 {
            completions.extend(sim.step());
        }
        assert_eq!(completions.len(), 2);
        // tick0 local, tick1 uplink, tick2-4 edge, tick5 broadcast -> done at 6.
        for c in &completions {
            assert_eq!(c.completed_at, 6);
            assert_eq!(
                c.durations,
                StageDurations { local: 1, uplink: 1, edge_queue: 0, edge_compute: 3, broadcast: 1 }
            );
        }
        let expected: Vec<(u64, u64, Stage, EventKind)> = vec![
            (0, a, Stage::LocalCompute, EventKind::Enter),
            (0, b, Stage::LocalCompute, EventKind::Enter),
            (1, a, Stage::LocalCompute, EventKind::Exit),
            (1, a, Stage::Uplink, EventKind::Enter),
            (1, b, Stage::LocalCompute, EventKind::Exit),
            (1, b, Stage::Uplink, EventKind::Enter),
            (2, a, Stage::Uplink, EventKind::Exit),
            (2, a, Stage::EdgeCompute, EventKind::Enter),
            (2, b, Stage::Uplink, EventKind::Exit),
            (2, b, Stage::EdgeCompute, EventKind::Enter),
            (5, a, Stage::EdgeCompute, EventKind::Exit),
            (5, a, Stage::Broadcast, EventKind::Enter),
            (5, b, Stage::EdgeCompute, EventKind::Exit),
            (5, b, Stage::Broadcast, EventKind::Enter),
            (6, a, Stage::Broadcast, EventKind::Exit),
            (6, b, Stage::Broadcast, EventKind::Exit),
        ];
        let got: Vec<_> = sim.log.records.iter().map(|r| (r.tick, r.task_id, r.stage, r.kind)).collect();
        assert_eq!(got, expected);
        assert_ne!(
            completions[0].durations.edge_compute,
            0,
            "edge counters decrease in the same ticks for both tasks"
        );
    }

    #[test]
    fn fifo_queueing_with_single_queue() {
        let mut s = setup(2, 1);
        s.edge.queues = 1;
        let mut sim = Simulator::new(s, Reservation::full()).unwrap();
        sim.insert_task(0, 0.0, &demands(0.0, 10.0, 20.0, 10.0)).unwrap();
        sim.insert_task(1, 0.0, &demands(0.0, 10.0, 20.0, 10.0)).unwrap();
        let mut completions = Vec::new();
        for _ in 0..20 {
            completions.extend(sim.step());
        }
        // Both arrive at tick 1; vehicle 0's task is served first.
        assert_eq!(completions[0].vehicle_id, 0);
        assert_eq!(completions[0].durations.edge_queue, 0);
        assert_eq!(completions[1].durations.edge_queue, 2);
        assert_eq!(completions[1].durations.edge_compute, 2);
    }

    #[test]
    fn zero_compute_never_finishes_edge() {
        let mut sim = Simulator::new(setup(1, 0), Reservation::new(1.0, 1.0, 0.0)).unwrap();
        let id = sim.insert_task(0, 0.0, &demands(0.0, 10.0, 20.0, 10.0)).unwrap();
        for _ in 0..100 {
            assert!(sim.step().is_empty());
        }
        assert_eq!(sim.task(id).unwrap().stage, Stage::EdgeCompute);
    }

    #[test]
    fn replay_matches_latency() {
        let mut sim = Simulator::new(setup(3, 5), Reservation::new(0.2, 0.1, 0.3)).unwrap();
        let mut completions = Vec::new();
        while completions.len() < 20 {
            for v in sim.idle_vehicles() {
                sim.start_offload(v, 0.25).unwrap();
            }
            completions.extend(sim.step());
        }
        let replay = sim.log.replay();
        for c in &completions {
            let r = replay[&c.task_id];
            assert_eq!(r.completed_at, Some(c.completed_at));
            assert_eq!(r.durations, c.durations);
            assert_eq!(r.durations.total(), c.completed_at - c.created_at);
        }
        let mut buf = Vec::new();
        sim.log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("tick,task_id,vehicle_id,stage,event\n"));
    }
}
