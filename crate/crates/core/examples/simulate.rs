//! Runs the tick-level simulator under a fixed reservation with constant
//! split policies and prints the latency decomposition per stage.
//!
//! ```text
//! cargo run --release --example simulate -- 0.6 0.5 0.4
//! ```

use edge_offload::config::ScenarioConfig;
use edge_offload::date::{self, BaselinePolicy, STAGE_NAMES};
use edge_offload::Reservation;

fn main() -> edge_offload::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let reservation = match args[..] {
        [u, d, c] => Reservation::from_array([u, d, c]),
        _ => Reservation::from_array([0.6, 0.5, 0.4]),
    };
    let cfg = ScenarioConfig::default();
    println!("{} vehicles, reservation {reservation}", cfg.scenario.n_vehicles);
    print!("{:<14} {:>8} {:>8}", "policy", "mean", "max");
    for s in STAGE_NAMES {
        print!(" {s:>12}");
    }
    println!();
    for policy in [
        BaselinePolicy::FullOffload,
        BaselinePolicy::StaticSplit(0.25),
        BaselinePolicy::StaticSplit(0.5),
        BaselinePolicy::FullLocal,
    ] {
        let r = date::evaluate(&cfg, &policy, &[reservation], cfg.scenario.n_vehicles, cfg.scenario.seed)?;
        let max = r.latencies().into_iter().fold(0.0, f64::max);
        print!("{:<14} {:>8.1} {:>8.0}", r.policy, r.mean_latency_ms(), max);
        for v in r.stage_means_ms() {
            print!(" {v:>12.1}");
        }
        println!();
    }
    Ok(())
}
