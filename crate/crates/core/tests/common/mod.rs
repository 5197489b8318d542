//! Shared checks for the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

use edge_offload::config::ScenarioConfig;
use edge_offload::radio;
use edge_offload::rng;
use edge_offload::simcore::{Simulator, Stage};
use edge_offload::Reservation;
use rand::Rng;

/// Small scenario with a short trace, for fast simulator-level tests.
pub fn quick_config() -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.trace.duration_ms = 60_000;
    c.scenario.record_events = true;
    c
}

/// Runs a random scenario and returns every invariant violation found.
pub fn scenario_violations(seed: u64) -> Vec<String> {
    let mut r = rng::stream(seed, &[0xACCE]);
    let mut cfg = quick_config();
    cfg.edge.queues = r.random_range(1..=4);
    let n = r.random_range(1..=6);
    let reservation = Reservation::random(&mut r, 0.05, 1.0);
    let completions = 40;
    let mut v = Vec::new();

    let run = |violations: &mut Vec<String>| {
        let mut splits = rng::stream(seed, &[0x5917]);
        let mut sim = Simulator::new(cfg.sim_setup(seed, n), reservation).unwrap();
        let mut done = Vec::new();
        let mut queues: Vec<VecDeque<u64>> = sim.server.queues.clone();
        let mut counters: BTreeMap<u64, [f64; 4]> = BTreeMap::new();
        let mut edge_exits: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
        let mut edge_entries: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
        while done.len() < completions && sim.now() < 2_000_000 {
            for veh in sim.idle_vehicles() {
                sim.start_offload(veh, splits.random::<f64>()).unwrap();
            }
            // Bandwidth shares of this tick's uplink senders sum to the reservation.
            let active: Vec<usize> =
                sim.tasks().filter(|t| t.stage == Stage::Uplink).map(|t| t.vehicle_id).collect();
            if !active.is_empty() {
                let share = radio::bandwidth_share(active.len(), reservation.uplink, cfg.channel.max_bandwidth_uplink_hz);
                let total = share * active.len() as f64;
                let want = reservation.uplink * cfg.channel.max_bandwidth_uplink_hz;
                if (total - want).abs() > 1e-9 * want {
                    violations.push(format!("seed {seed}: uplink shares sum {total} != {want}"));
                }
            }
            // One in-flight task per vehicle.
            let mut per_vehicle = vec![0usize; n];
            for t in sim.tasks() {
                per_vehicle[t.vehicle_id] += 1;
            }
            if per_vehicle.iter().any(|&c| c > 1) {
                violations.push(format!("seed {seed}: vehicle with two in-flight tasks at tick {}", sim.now()));
            }
            done.extend(sim.step());
            // Counters never increase.
            for t in sim.tasks() {
                let now = [
                    t.remaining_local_ms,
                    t.uplink_bytes_remaining,
                    t.remaining_edge_ms_at_unit_capacity,
                    t.broadcast_bytes_remaining,
                ];
                if let Some(prev) = counters.get(&t.id) {
                    if now.iter().zip(prev).any(|(a, b)| a > b) {
                        violations.push(format!("seed {seed}: counter of task {} increased", t.id));
                    }
                }
                if now.iter().any(|c| *c < 0.0) {
                    violations.push(format!("seed {seed}: negative counter"));
                }
                counters.insert(t.id, now);
            }
            // Queues only lose tasks at the front and gain them at the back.
            for (qi, (old, new)) in queues.iter().zip(&sim.server.queues).enumerate() {
                let popped = old.iter().take_while(|id| !new.contains(id)).count();
                let kept: Vec<u64> = old.iter().skip(popped).copied().collect();
                if new.iter().take(kept.len()).copied().collect::<Vec<_>>() != kept {
                    violations.push(format!("seed {seed}: queue {qi} reordered at tick {}", sim.now()));
                }
                edge_exits.entry(qi).or_default().extend(old.iter().take(popped));
                edge_entries.entry(qi).or_default().extend(new.iter().skip(kept.len()));
            }
            queues = sim.server.queues.clone();
        }
        if done.len() < completions {
            violations.push(format!("seed {seed}: only {} completions", done.len()));
        }
        for (qi, exits) in &edge_exits {
            let entries = &edge_entries[qi];
            if entries[..exits.len()] != exits[..] {
                violations.push(format!("seed {seed}: queue {qi} served out of arrival order"));
            }
        }
        // Work conservation against the event-log replay.
        let replay = sim.log.replay();
        for c in &done {
            let r = &replay[&c.task_id];
            if r.durations.total() != c.completed_at - c.created_at || r.completed_at != Some(c.completed_at) {
                violations.push(format!("seed {seed}: task {} stage durations do not sum to latency", c.task_id));
            }
            if c.durations != r.durations {
                violations.push(format!("seed {seed}: task {} replay differs", c.task_id));
            }
        }
        // Per-vehicle decision ticks strictly increase.
        let mut last: BTreeMap<usize, u64> = BTreeMap::new();
        let mut by_start = done.clone();
        by_start.sort_by_key(|c| (c.vehicle_id, c.created_at));
        for c in &by_start {
            if let Some(&p) = last.get(&c.vehicle_id) {
                if c.created_at < p {
                    violations.push(format!("seed {seed}: vehicle {} overlapping offloads", c.vehicle_id));
                }
            }
            last.insert(c.vehicle_id, c.completed_at);
        }
        let mut csv = Vec::new();
        sim.log.write_csv(&mut csv).unwrap();
        csv
    };
    let a = run(&mut v);
    let b = run(&mut v);
    if a != b {
        v.push(format!("seed {seed}: event logs differ between identical runs"));
    }
    v
}
