//! Training moves the shared policy to the dominant split when one exists.

use edge_offload::config::ScenarioConfig;
use edge_offload::date;
use edge_offload::marl::Observation;
use edge_offload::Reservation;

fn stationary() -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.scenario.n_vehicles = 1;
    c.trace.duration_ms = 60_000;
    c.training.epochs = 30;
    c.training.transitions_per_epoch = 400;
    c.training.reservations_per_epoch = 1;
    c.training.minibatch = 64;
    c.training.hidden = vec![32, 32];
    c.training.reservation_min = 1.0;
    c.evaluation.panel_reservations = 1;
    c.evaluation.panel_offloads = 20;
    c
}

fn mean_action(cfg: &ScenarioConfig) -> f64 {
    let r = date::train_policy(cfg, 4).unwrap();
    let o = Observation::new(2.5, 8.0, 10.0, 40.0, 0.0, Reservation::full(), &cfg.observation);
    r.policy.mean_action(&o)
}

#[test]
fn learns_full_offload_when_edge_dominates() {
    let mut c = stationary();
    c.edge.max_speedup = 100.0;
    c.channel.max_bandwidth_uplink_hz = 1e9;
    let a = mean_action(&c);
    assert!(a <= 0.1, "mean split {a}");
}

#[test]
fn learns_full_local_when_uplink_is_starved() {
    let mut c = stationary();
    c.channel.max_bandwidth_uplink_hz = 2e4;
    let a = mean_action(&c);
    assert!(a >= 0.9, "mean split {a}");
}
