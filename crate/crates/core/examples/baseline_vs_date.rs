//! Compares converged reservation usage of the trained policy, the
//! full-offload controller and the grid-calibrated baseline.
//!
//! Pass a checkpoint written by the `train_policy` example; without one a
//! short training run is done first.
//!
//! ```text
//! cargo run --release --example baseline_vs_date -- policy.json
//! ```

use std::path::Path;
use std::sync::Arc;

use edge_offload::config::ScenarioConfig;
use edge_offload::date::{self, BaselinePolicy, CONVERGED_WINDOWS, ROLLING_WINDOWS};
use edge_offload::marl::PolicyPair;

fn main() -> edge_offload::Result<()> {
    let mut cfg = ScenarioConfig::default();
    let (seed, n) = (cfg.scenario.seed, cfg.scenario.n_vehicles);
    let policy = match std::env::args().nth(1) {
        Some(p) => PolicyPair::load(Path::new(&p))?,
        None => {
            cfg.training.epochs = 20;
            println!("no checkpoint given, training for {} epochs", cfg.training.epochs);
            date::train_policy(&cfg, seed)?.policy
        }
    };
    let trained = BaselinePolicy::Trained(Arc::new(policy));
    let d = date::run_reservation_loop(&cfg, &trained, n, seed)?;
    let v = date::run_virtualedge(&cfg, n, seed)?;
    let b = date::baseline_calibrate(&cfg, &BaselinePolicy::FullOffload, n, seed)?;
    println!("{:<12} {:>8} {:>10}  reservation", "approach", "usage", "l_H ms");
    for (name, t) in [("trained", &d), ("full-offload", &v)] {
        println!(
            "{name:<12} {:>8.3} {:>10.1}  {}",
            t.converged_usage(CONVERGED_WINDOWS),
            t.rolling_l_h(ROLLING_WINDOWS),
            t.final_reservation().unwrap_or_else(edge_offload::Reservation::full)
        );
    }
    println!("{:<12} {:>8.3} {:>10.1}  {}", "baseline", b.usage, b.l_h_ms, b.reservation);
    Ok(())
}
