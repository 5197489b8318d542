use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use edge_offload::artifacts::{self, Manifest, UsageRow};
use edge_offload::config::ScenarioConfig;
use edge_offload::date::{self, BaselinePolicy, CONVERGED_WINDOWS, ROLLING_WINDOWS};
use edge_offload::marl::PolicyPair;
use edge_offload::{Error, Result};

#[derive(Parser)]
#[command(name = "edge-offload", version, about = "Vehicular split-offloading simulator and two-timescale controller")]
struct Cli {
    /// Scenario file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `scenario.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Root directory for run outputs.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Dotted-path override, e.g. `training.epochs=20`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the shared split policy.
    Train,
    /// Run the reservation controller with a trained policy.
    Reserve {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Calibrate a constant policy's reservation by grid descent.
    Baseline {
        /// full_offload, full_local or static:<split>
        #[arg(long, default_value = "full_offload")]
        policy: String,
    },
    /// Run the reservation controller with the full-offload policy.
    Virtualedge,
    /// Latency CDF and per-stage breakdown on the evaluation panel.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Policies to compare; `trained` needs --checkpoint.
        #[arg(long = "policy", value_delimiter = ',')]
        policies: Vec<String>,
    },
    /// Usage of the three approaches across vehicle counts.
    SweepVehicles {
        /// Inclusive range `lo..hi` or comma list; defaults to `sweep.vehicle_counts`.
        counts: Option<String>,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn parse_policy(name: &str, trained: Option<&Arc<PolicyPair>>) -> Result<BaselinePolicy> {
    match name {
        "full_offload" => Ok(BaselinePolicy::FullOffload),
        "full_local" => Ok(BaselinePolicy::FullLocal),
        "trained" => trained
            .cloned()
            .map(BaselinePolicy::Trained)
            .ok_or_else(|| Error::Config("policy `trained` needs --checkpoint".into())),
        s => match s.strip_prefix("static:").map(str::parse::<f64>) {
            Some(Ok(a)) if (0.0..=1.0).contains(&a) => Ok(BaselinePolicy::StaticSplit(a)),
            _ => Err(Error::Config(format!("unknown policy `{s}`"))),
        },
    }
}

fn parse_counts(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("invalid vehicle counts `{s}`"));
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim_start_matches('=').trim().parse().map_err(|_| bad())?;
        if lo == 0 || hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',').map(|c| c.trim().parse().ok().filter(|&n| n > 0).ok_or_else(bad)).collect()
}

fn load_checkpoint(path: &Path) -> Result<Arc<PolicyPair>> {
    if !path.exists() {
        return Err(Error::Checkpoint(format!("checkpoint {} does not exist", path.display())));
    }
    Ok(Arc::new(PolicyPair::load(path)?))
}

fn usage_row(name: &str, t: &date::ControllerTrajectory) -> UsageRow {
    UsageRow {
        approach: name.into(),
        reservation: t.final_reservation().unwrap_or_else(edge_offload::Reservation::full),
        usage: t.converged_usage(CONVERGED_WINDOWS),
        l_h_ms: t.rolling_l_h(ROLLING_WINDOWS),
    }
}

fn run(cli: Cli) -> Result<PathBuf> {
    let mut cfg = ScenarioConfig::load(cli.config.as_deref(), &cli.set)?;
    if let Some(s) = cli.seed {
        cfg.scenario.seed = s;
    }
    let seed = cfg.scenario.seed;
    let n = cfg.scenario.n_vehicles;
    let name = match &cli.command {
        Command::Train => "train",
        Command::Reserve { .. } => "reserve",
        Command::Baseline { .. } => "baseline",
        Command::Virtualedge => "virtualedge",
        Command::Evaluate { .. } => "evaluate",
        Command::SweepVehicles { .. } => "sweep-vehicles",
    };
    // Validate inputs before creating the output directory.
    let checkpoint = match &cli.command {
        Command::Reserve { checkpoint } | Command::SweepVehicles { checkpoint, .. } => Some(load_checkpoint(checkpoint)?),
        Command::Evaluate { checkpoint: Some(c), .. } => Some(load_checkpoint(c)?),
        _ => None,
    };
    let baseline = match &cli.command {
        Command::Baseline { policy } => Some(parse_policy(policy, None)?),
        _ => None,
    };
    let dir = artifacts::run_dir(&cli.out, name, seed)?;
    let mut manifest = Manifest::new(name, seed, &cfg, &cli.set);
    let mut files: Vec<&str> = Vec::new();
    match cli.command {
        Command::Train => {
            let r = date::train_policy_with(&cfg, seed, |e| {
                eprintln!("epoch {:>3}  mean latency {:>8.1} ms  clip {:.3}", e.epoch, e.mean_latency_ms, e.clip_fraction)
            })?;
            artifacts::write_training_curve(&dir.join("training_curve.csv"), &r.curve)?;
            r.policy.save(&dir.join("policy.json"))?;
            eprintln!("panel latency {:.1} ms -> {:.1} ms", r.initial_panel_ms, r.final_panel_ms);
            files.extend(["training_curve.csv", "policy.json"]);
        }
        Command::Reserve { .. } => {
            let policy = BaselinePolicy::Trained(checkpoint.expect("loaded above"));
            let t = date::run_reservation_loop(&cfg, &policy, n, seed)?;
            artifacts::write_trajectory(&dir.join("trajectory.csv"), &t)?;
            artifacts::write_usage(&dir.join("usage.csv"), &[usage_row("date", &t)])?;
            files.extend(["trajectory.csv", "usage.csv"]);
        }
        Command::Virtualedge => {
            let t = date::run_virtualedge(&cfg, n, seed)?;
            artifacts::write_trajectory(&dir.join("trajectory.csv"), &t)?;
            artifacts::write_usage(&dir.join("usage.csv"), &[usage_row("virtualedge", &t)])?;
            files.extend(["trajectory.csv", "usage.csv"]);
        }
        Command::Baseline { .. } => {
            let p = baseline.expect("parsed above");
            let c = date::baseline_calibrate(&cfg, &p, n, seed)?;
            let rows: Vec<UsageRow> = c
                .probes
                .iter()
                .map(|(r, l)| UsageRow { approach: "probe".into(), reservation: *r, usage: r.usage(cfg.reservation.weights), l_h_ms: *l })
                .chain(std::iter::once(UsageRow {
                    approach: format!("baseline_{}", p.name()),
                    reservation: c.reservation,
                    usage: c.usage,
                    l_h_ms: c.l_h_ms,
                }))
                .collect();
            artifacts::write_usage(&dir.join("usage.csv"), &rows)?;
            files.push("usage.csv");
        }
        Command::Evaluate { policies, .. } => {
            let names = if policies.is_empty() {
                let mut v = vec!["full_offload".to_string(), "full_local".into(), "static:0.5".into()];
                if checkpoint.is_some() {
                    v.push("trained".into());
                }
                v
            } else {
                policies
            };
            let panel = date::evaluation_panel(&cfg, seed);
            let results = names
                .iter()
                .map(|p| date::evaluate(&cfg, &parse_policy(p, checkpoint.as_ref())?, &panel, n, seed))
                .collect::<Result<Vec<_>>>()?;
            for r in &results {
                eprintln!("{:<14} mean latency {:.1} ms", r.policy, r.mean_latency_ms());
            }
            artifacts::write_cdf(&dir.join("latency_cdf.csv"), &results)?;
            artifacts::write_stages(&dir.join("stages.csv"), &results)?;
            files.extend(["latency_cdf.csv", "stages.csv"]);
        }
        Command::SweepVehicles { counts, .. } => {
            let counts = match counts {
                Some(s) => parse_counts(&s)?,
                None => cfg.sweep.vehicle_counts.clone(),
            };
            let rows = date::sweep_vehicles(&cfg, &checkpoint.expect("loaded above"), &counts, seed)?;
            artifacts::write_sweep(&dir.join("sweep.csv"), &rows)?;
            files.push("sweep.csv");
        }
    }
    manifest.files = files.into_iter().map(String::from).collect();
    manifest.write(&dir)?;
    Ok(dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
