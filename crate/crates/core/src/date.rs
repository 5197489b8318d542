//! Two-phase orchestration and the comparison policies.
//!
//! Phase one trains the shared split policy under reservations redrawn every
//! epoch. Phase two freezes it and runs the reservation controller: random
//! warm-up windows seed the regression dataset, then guided windows follow
//! the primal-dual rule. The same controller driven by the full-offload
//! policy gives the VirtualEdge comparison; Baseline is full offload with a
//! reservation found by grid descent from full resources.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::marl::{
    self, collect_rollouts, ppo_update, run_policy, ActMode, PolicyPair, PpoOptimizers, SplitPolicy, Transition,
};
use crate::reserve::{self, GprDataset, GprModel, ReservationState};
use crate::rng;
use crate::simcore::{CompletedTask, Reservation, Simulator};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentPhase {
    PolicyTraining,
    ReservationLearning,
    Evaluation,
}

/// Split policies compared in the experiments.
#[derive(Debug, Clone)]
pub enum BaselinePolicy {
    /// Everything at the edge (split 0).
    FullOffload,
    /// Everything on the vehicle (split 1).
    FullLocal,
    StaticSplit(f64),
    Trained(Arc<PolicyPair>),
}

impl BaselinePolicy {
    pub fn name(&self) -> String {
        match self {
            Self::FullOffload => "full_offload".into(),
            Self::FullLocal => "full_local".into(),
            Self::StaticSplit(a) => format!("static_{a}"),
            Self::Trained(_) => "trained".into(),
        }
    }
}

impl SplitPolicy for BaselinePolicy {
    fn split(&self, obs: &marl::Observation) -> f64 {
        match self {
            Self::FullOffload => 0.0,
            Self::FullLocal => 1.0,
            Self::StaticSplit(a) => *a,
            Self::Trained(p) => p.split(obs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub grid_step: f64,
    /// Windows scored per candidate reservation; the worst one counts.
    pub calibration_windows: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { grid_step: 0.02, calibration_windows: 3 }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let n = (1.0 / self.grid_step).round();
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) || (n * self.grid_step - 1.0).abs() > 1e-9 {
            return Err(Error::Config("baseline.grid_step must divide 1 evenly".into()));
        }
        if self.calibration_windows == 0 {
            return Err(Error::Config("baseline.calibration_windows must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// Random reservations in the evaluation panel.
    pub panel_reservations: usize,
    pub panel_offloads: usize,
    pub reservation_min: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { panel_reservations: 32, panel_offloads: 400, reservation_min: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub vehicle_counts: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { vehicle_counts: (2..=10).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_latency_ms: f64,
    pub mean_reward: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
    pub value_loss: f64,
    pub exploration_std: f64,
    pub update_steps: usize,
}

#[derive(Debug, Clone)]
pub struct TrainingResult {
    pub policy: PolicyPair,
    pub curve: Vec<EpochRecord>,
    /// Panel latency of the initial and the final policy.
    pub initial_panel_ms: f64,
    pub final_panel_ms: f64,
}

/// Reservations of the evaluation panel for `seed`.
pub fn evaluation_panel(cfg: &ScenarioConfig, seed: u64) -> Vec<Reservation> {
    let mut r = rng::stream(seed, &[rng::EVALUATION, u64::MAX]);
    (0..cfg.evaluation.panel_reservations)
        .map(|_| Reservation::random(&mut r, cfg.evaluation.reservation_min, 1.0))
        .collect()
}

/// Latencies of a policy on a set of reservations, one fresh simulator per
/// reservation, all driven by the same seed.
#[derive(Debug, Clone)]
pub struct EvaluationResult {
    pub policy: String,
    pub per_reservation_mean_ms: Vec<f64>,
    pub completions: Vec<CompletedTask>,
}

impl EvaluationResult {
    pub fn mean_latency_ms(&self) -> f64 {
        stats::mean(&self.latencies())
    }

    pub fn latencies(&self) -> Vec<f64> {
        self.completions.iter().map(CompletedTask::latency_ms).collect()
    }

    /// Mean time spent per stage, in local, uplink, queue, edge, broadcast order.
    pub fn stage_means_ms(&self) -> [f64; 5] {
        let n = self.completions.len().max(1) as f64;
        let mut s = [0.0; 5];
        for c in &self.completions {
            let d = c.durations;
            for (acc, v) in s.iter_mut().zip([d.local, d.uplink, d.edge_queue, d.edge_compute, d.broadcast]) {
                *acc += v as f64;
            }
        }
        s.map(|x| x / n)
    }
}

pub const STAGE_NAMES: [&str; 5] = ["local", "uplink", "edge_queue", "edge_compute", "broadcast"];

pub fn evaluate(
    cfg: &ScenarioConfig,
    policy: &BaselinePolicy,
    reservations: &[Reservation],
    n_vehicles: usize,
    seed: u64,
) -> Result<EvaluationResult> {
    let runs: Vec<Vec<CompletedTask>> = reservations
        .par_iter()
        .map(|&r| {
            let mut sim = Simulator::new(cfg.sim_setup(seed, n_vehicles), r)?;
            let run = run_policy(
                &mut sim,
                policy,
                &cfg.observation,
                cfg.evaluation.panel_offloads,
                cfg.reservation.window_timeout_ms * 10,
            )?;
            Ok(run.completions)
        })
        .collect::<Result<_>>()?;
    let per_reservation_mean_ms = runs
        .iter()
        .map(|c| stats::mean(&c.iter().map(CompletedTask::latency_ms).collect::<Vec<_>>()))
        .collect();
    Ok(EvaluationResult { policy: policy.name(), per_reservation_mean_ms, completions: runs.concat() })
}

fn panel_latency(cfg: &ScenarioConfig, policy: &PolicyPair, seed: u64) -> Result<f64> {
    let panel = evaluation_panel(cfg, seed);
    let p = BaselinePolicy::Trained(Arc::new(policy.clone()));
    Ok(evaluate(cfg, &p, &panel, cfg.scenario.n_vehicles, seed)?.mean_latency_ms())
}

/// Phase one. Each epoch draws a reservation, collects a batch of
/// transitions from a freshly seeded simulator, then runs a PPO update.
pub fn train_policy(cfg: &ScenarioConfig, seed: u64) -> Result<TrainingResult> {
    train_policy_with(cfg, seed, |_| {})
}

/// [`train_policy`] with a per-epoch callback, e.g. for progress output.
pub fn train_policy_with(
    cfg: &ScenarioConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainingResult> {
    let t = &cfg.training;
    let mut policy = PolicyPair::new(t, &mut rng::stream(seed, &[rng::POLICY]));
    let mut opt = PpoOptimizers::new(t);
    let spec = cfg.rollout_spec();
    let initial_panel_ms = panel_latency(cfg, &policy, seed)?;
    let mut curve = Vec::with_capacity(t.epochs);
    for epoch in 0..t.epochs {
        let std = t.noise.std_at(epoch);
        let k = t.reservations_per_epoch;
        let mut draw = rng::stream(seed, &[rng::RESERVATION, epoch as u64]);
        let reservations: Vec<Reservation> =
            (0..k).map(|_| Reservation::random(&mut draw, t.reservation_min, 1.0)).collect();
        let per_rollout = t.transitions_per_epoch.div_ceil(k);
        let rollouts = reservations
            .par_iter()
            .enumerate()
            .map(|(i, &r)| {
                let sim_seed = rng::derive_seed(seed, &[rng::EPISODE, epoch as u64, i as u64]);
                let mut rollout = collect_rollouts(
                    &policy,
                    &cfg.sim_setup(sim_seed, cfg.scenario.n_vehicles),
                    r,
                    &spec,
                    per_rollout,
                    ActMode::Explore { std },
                    &mut marl::exploration_rng(seed, epoch, i),
                )?;
                rollout.transitions.iter_mut().for_each(|t| t.rollout = i);
                Ok(rollout)
            })
            .collect::<Result<Vec<_>>>()?;
        let transitions: Vec<Transition> = rollouts.into_iter().flat_map(|r| r.transitions).collect();
        let mean_latency_ms = stats::mean(&transitions.iter().map(|t| t.latency_ms).collect::<Vec<_>>());
        let mean_reward = stats::mean(&transitions.iter().map(|t| t.reward).collect::<Vec<_>>());
        let diag = ppo_update(
            &mut policy,
            &mut opt,
            &transitions,
            t,
            &mut rng::stream(seed, &[rng::MINIBATCH, epoch as u64]),
        )?;
        let rec = EpochRecord {
            epoch,
            mean_latency_ms,
            mean_reward,
            clip_fraction: diag.clip_fraction,
            mean_ratio: diag.mean_ratio,
            value_loss: diag.value_loss,
            exploration_std: std,
            update_steps: diag.steps,
        };
        on_epoch(&rec);
        curve.push(rec);
    }
    let final_panel_ms = if t.epochs == 0 { initial_panel_ms } else { panel_latency(cfg, &policy, seed)? };
    Ok(TrainingResult { policy, curve, initial_panel_ms, final_panel_ms })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowRecord {
    pub window: usize,
    pub phase: &'static str,
    pub reservation: Reservation,
    pub lambda: f64,
    pub l_h_ms: f64,
    pub usage: f64,
    pub censored: bool,
}

#[derive(Debug, Clone)]
pub struct ControllerTrajectory {
    pub policy: String,
    pub windows: Vec<WindowRecord>,
    pub skipped_windows: usize,
}

impl ControllerTrajectory {
    fn guided(&self) -> Vec<&WindowRecord> {
        self.windows.iter().filter(|w| w.phase == "guided").collect()
    }

    /// Mean of the last `n` guided-window maxima.
    pub fn rolling_l_h(&self, n: usize) -> f64 {
        let g = self.guided();
        let tail: Vec<f64> = g[g.len().saturating_sub(n)..].iter().map(|w| w.l_h_ms).collect();
        stats::mean(&tail)
    }

    /// Mean weighted usage over the last `n` guided windows.
    pub fn converged_usage(&self, n: usize) -> f64 {
        let g = self.guided();
        let tail: Vec<f64> = g[g.len().saturating_sub(n)..].iter().map(|w| w.usage).collect();
        stats::mean(&tail)
    }

    pub fn usage_tail(&self, n: usize) -> Vec<f64> {
        let g = self.guided();
        g[g.len().saturating_sub(n)..].iter().map(|w| w.usage).collect()
    }

    pub fn final_reservation(&self) -> Option<Reservation> {
        self.windows.last().map(|w| w.reservation)
    }
}

/// Phase two for an arbitrary frozen split policy.
pub fn run_reservation_loop(
    cfg: &ScenarioConfig,
    policy: &BaselinePolicy,
    n_vehicles: usize,
    seed: u64,
) -> Result<ControllerTrajectory> {
    let c = &cfg.reservation;
    let l_max = cfg.scenario.l_max_ms;
    let mut sim = Simulator::new(cfg.sim_setup(seed, n_vehicles), Reservation::full())?;
    let mut data = GprDataset::new(c.dataset_capacity);
    let mut warm = rng::stream(seed, &[rng::RESERVATION, u64::MAX]);
    let mut state = ReservationState::new(Reservation::full(), l_max, c);
    let mut windows = Vec::with_capacity(c.warmup_windows + c.guided_windows);
    let mut skipped = 0;
    for w in 0..c.warmup_windows + c.guided_windows {
        let warmup = w < c.warmup_windows;
        if warmup {
            state.reservation = Reservation::random(&mut warm, c.warmup_min, 1.0);
        } else if w == c.warmup_windows {
            state = ReservationState::new(warmup_start(&windows, l_max, cfg.reservation.weights), l_max, c);
        }
        sim.set_reservation(state.reservation);
        let run = run_policy(&mut sim, policy, &cfg.observation, c.window_offloads, c.window_timeout_ms)?;
        let Some(l_h) = run.max_latency_ms() else {
            skipped += 1;
            continue;
        };
        let x = state.reservation.to_array();
        data.push(x, l_h);
        windows.push(WindowRecord {
            window: w,
            phase: if warmup { "warmup" } else { "guided" },
            reservation: state.reservation,
            lambda: state.lambda,
            l_h_ms: l_h,
            usage: state.usage(),
            censored: run.censored_age_ms.is_some(),
        });
        if !warmup {
            let model = GprModel::fit(&data, c.gpr)?;
            let grad = model.expected_gradient(&x, c.tau);
            state = state.update_reservation(grad, l_h)?;
        }
    }
    Ok(ControllerTrajectory { policy: policy.name(), windows, skipped_windows: skipped })
}

/// Lowest-usage warm-up reservation that met the requirement, or full
/// resources when none did.
fn warmup_start(windows: &[WindowRecord], l_max: f64, weights: [f64; 3]) -> Reservation {
    windows
        .iter()
        .filter(|w| w.l_h_ms <= l_max)
        .min_by(|a, b| a.reservation.usage(weights).total_cmp(&b.reservation.usage(weights)))
        .map(|w| w.reservation)
        .unwrap_or_else(Reservation::full)
}

/// The controller with the constant full-offload policy.
pub fn run_virtualedge(cfg: &ScenarioConfig, n_vehicles: usize, seed: u64) -> Result<ControllerTrajectory> {
    run_reservation_loop(cfg, &BaselinePolicy::FullOffload, n_vehicles, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub reservation: Reservation,
    pub usage: f64,
    pub l_h_ms: f64,
    /// Every scored point, in evaluation order.
    pub probes: Vec<(Reservation, f64)>,
}

/// Worst latency over `calibration_windows` consecutive windows of a fresh
/// simulator. The seed is fixed so every candidate sees the same demands.
pub fn score_reservation(
    cfg: &ScenarioConfig,
    policy: &BaselinePolicy,
    reservation: Reservation,
    n_vehicles: usize,
    seed: u64,
) -> Result<f64> {
    let c = &cfg.reservation;
    let mut sim = Simulator::new(cfg.sim_setup(seed, n_vehicles), reservation)?;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..cfg.baseline.calibration_windows {
        let run = run_policy(&mut sim, policy, &cfg.observation, c.window_offloads, c.window_timeout_ms)?;
        worst = worst.max(reserve::observe_window(&run.latencies()).unwrap_or(f64::INFINITY));
        if let Some(age) = run.censored_age_ms {
            worst = worst.max(age);
            break;
        }
    }
    Ok(worst)
}

/// Grid descent from full resources: shrink all three fractions together
/// while the requirement holds, then shrink each fraction on its own.
pub fn baseline_calibrate(
    cfg: &ScenarioConfig,
    policy: &BaselinePolicy,
    n_vehicles: usize,
    seed: u64,
) -> Result<CalibrationResult> {
    let step = cfg.baseline.grid_step;
    let n = (1.0 / step).round() as i64;
    let l_max = cfg.scenario.l_max_ms;
    let at = |idx: [i64; 3]| Reservation::from_array(idx.map(|i| i as f64 * step));
    let mut probes = Vec::new();
    let mut score = |idx: [i64; 3]| -> Result<f64> {
        let r = at(idx);
        let s = score_reservation(cfg, policy, r, n_vehicles, seed)?;
        probes.push((r, s));
        Ok(s)
    };
    let mut idx = [n; 3];
    let mut best = score(idx)?;
    if best > l_max {
        return Err(Error::Infeasible { l_h: best, l_max });
    }
    while idx[0] > 1 {
        let next = idx.map(|i| i - 1);
        let s = score(next)?;
        if s > l_max {
            break;
        }
        idx = next;
        best = s;
    }
    for m in 0..3 {
        while idx[m] > 1 {
            let mut next = idx;
            next[m] -= 1;
            let s = score(next)?;
            if s > l_max {
                break;
            }
            idx = next;
            best = s;
        }
    }
    let reservation = at(idx);
    Ok(CalibrationResult { reservation, usage: reservation.usage(cfg.reservation.weights), l_h_ms: best, probes })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_vehicles: usize,
    pub date_usage: f64,
    pub virtualedge_usage: f64,
    pub baseline_usage: f64,
    pub date_l_h_ms: f64,
    /// Baseline usage minus the trained policy's converged usage.
    pub gap: f64,
}

/// Usage of the three approaches for each vehicle count. A count at which
/// Baseline is infeasible even with full resources is scored at usage 3.
pub fn sweep_vehicles(
    cfg: &ScenarioConfig,
    policy: &PolicyPair,
    counts: &[usize],
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let trained = BaselinePolicy::Trained(Arc::new(policy.clone()));
    let full_usage: f64 = cfg.reservation.weights.iter().sum();
    counts
        .par_iter()
        .map(|&n| {
            let date = run_reservation_loop(cfg, &trained, n, seed)?;
            let ve = run_virtualedge(cfg, n, seed)?;
            let base = match baseline_calibrate(cfg, &BaselinePolicy::FullOffload, n, seed) {
                Ok(c) => c.usage,
                Err(Error::Infeasible { .. }) => full_usage,
                Err(e) => return Err(e),
            };
            let date_usage = date.converged_usage(CONVERGED_WINDOWS);
            Ok(SweepRow {
                n_vehicles: n,
                date_usage,
                virtualedge_usage: ve.converged_usage(CONVERGED_WINDOWS),
                baseline_usage: base,
                date_l_h_ms: date.rolling_l_h(ROLLING_WINDOWS),
                gap: base - date_usage,
            })
        })
        .collect()
}

/// Windows averaged for the converged usage.
pub const CONVERGED_WINDOWS: usize = 20;
/// Windows averaged for the rolling worst latency.
pub const ROLLING_WINDOWS: usize = 10;

/// Random reservations for ad-hoc comparisons.
pub fn random_reservations<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64) -> Vec<Reservation> {
    (0..n).map(|_| Reservation::random(rng, lo, 1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        c.trace.duration_ms = 20_000;
        c.training.epochs = 0;
        c.training.hidden = vec![8, 8];
        c.evaluation.panel_reservations = 2;
        c.evaluation.panel_offloads = 20;
        c.reservation.warmup_windows = 3;
        c.reservation.guided_windows = 3;
        c.reservation.window_offloads = 10;
        c.baseline.calibration_windows = 1;
        c
    }

    #[test]
    fn constant_policies() {
        let o = marl::Observation::new(2.5, 8.0, 10.0, 40.0, 0.0, Reservation::full(), &Default::default());
        assert_eq!(BaselinePolicy::FullOffload.split(&o), 0.0);
        assert_eq!(BaselinePolicy::FullLocal.split(&o), 1.0);
        assert_eq!(BaselinePolicy::StaticSplit(0.3).split(&o), 0.3);
    }

    #[test]
    fn zero_epochs_returns_initial_policy() {
        let c = small();
        let r = train_policy(&c, 5).unwrap();
        let init = PolicyPair::new(&c.training, &mut rng::stream(5, &[rng::POLICY]));
        assert_eq!(r.policy, init);
        assert!(r.curve.is_empty());
        assert_eq!(r.initial_panel_ms, r.final_panel_ms);
    }

    #[test]
    fn training_is_reproducible() {
        let mut c = small();
        c.training.epochs = 2;
        c.training.transitions_per_epoch = 40;
        c.training.minibatch = 16;
        c.training.update_epochs = 2;
        let a = train_policy(&c, 9).unwrap();
        let b = train_policy(&c, 9).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.policy.fingerprint(), b.policy.fingerprint());
    }

    #[test]
    fn controller_phases_and_multiplier_start() {
        let c = small();
        let t = run_reservation_loop(&c, &BaselinePolicy::StaticSplit(0.3), 3, 2).unwrap();
        assert_eq!(t.windows.len() + t.skipped_windows, 6);
        assert!(t.windows[..3].iter().all(|w| w.phase == "warmup" && w.lambda == 0.0));
        let first_guided = t.windows.iter().find(|w| w.phase == "guided").unwrap();
        assert_eq!(first_guided.lambda, 0.0);
        for w in &t.windows {
            assert!(w.reservation.is_valid());
        }
    }

    #[test]
    fn virtualedge_is_full_offload() {
        let c = small();
        let t = run_virtualedge(&c, 2, 4).unwrap();
        assert_eq!(t.policy, "full_offload");
    }

    #[test]
    fn always_feasible_calibrates_to_grid_minimum() {
        let mut c = small();
        c.scenario.l_max_ms = 1e12;
        c.baseline.grid_step = 0.25;
        let r = baseline_calibrate(&c, &BaselinePolicy::FullLocal, 2, 1).unwrap();
        assert_eq!(r.reservation, Reservation::uniform(0.25));
    }

    #[test]
    fn infeasible_at_full_is_reported() {
        let mut c = small();
        c.scenario.l_max_ms = 1.0;
        assert!(matches!(
            baseline_calibrate(&c, &BaselinePolicy::FullOffload, 2, 1),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn full_local_has_no_edge_time() {
        let c = small();
        let r = evaluate(&c, &BaselinePolicy::FullLocal, &[Reservation::full()], 2, 3).unwrap();
        let s = r.stage_means_ms();
        assert!(s[0] > 0.0);
        assert_eq!(s[2] + s[3], 0.0);
    }
}
