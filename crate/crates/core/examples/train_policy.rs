//! Trains the shared split policy and saves a checkpoint.
//!
//! Extra arguments are dotted config overrides, e.g. a shorter run:
//!
//! ```text
//! cargo run --release --example train_policy -- training.epochs=20
//! ```

use std::path::Path;

use edge_offload::config::ScenarioConfig;
use edge_offload::date;

fn main() -> edge_offload::Result<()> {
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    let cfg = ScenarioConfig::load(None, &overrides)?;
    let seed = cfg.scenario.seed;
    let r = date::train_policy_with(&cfg, seed, |e| {
        if e.epoch % 5 == 0 {
            println!("epoch {:>3}  latency {:>7.1} ms  clip {:.3}  std {:.3}", e.epoch, e.mean_latency_ms, e.clip_fraction, e.exploration_std);
        }
    })?;
    println!("evaluation panel: {:.1} ms -> {:.1} ms", r.initial_panel_ms, r.final_panel_ms);
    let out = Path::new("policy.json");
    r.policy.save(out)?;
    println!("saved {} (fingerprint {})", out.display(), &r.policy.fingerprint()[..12]);
    Ok(())
}
