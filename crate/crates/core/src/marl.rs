//! Asynchronous multi-agent PPO with one shared actor-critic.
//!
//! Every vehicle runs the same parameter snapshot. A decision is taken when
//! the vehicle's previous offload completes; the transition is closed when
//! the offload it started completes, with reward `-latency / L_max`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::neural::{Direction, Gradients, Head, Mlp, MlpCheckpoint, Optimizer, OptimizerKind};
use crate::rng::{self, StreamRng};
use crate::simcore::{CompletedTask, Reservation, SimSetup, Simulator};

pub const OBS_DIM: usize = 8;

/// Normalization bounds, each feature mapped linearly onto [0, 1] and clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationScaling {
    pub cpu_ghz: [f64; 2],
    pub ram_gb: [f64; 2],
    pub speed_mps: [f64; 2],
    pub snr_db: [f64; 2],
    pub workload_ms: [f64; 2],
}

impl Default for ObservationScaling {
    fn default() -> Self {
        Self {
            cpu_ghz: [1.0, 4.0],
            ram_gb: [0.0, 32.0],
            speed_mps: [0.0, 20.0],
            snr_db: [0.0, 80.0],
            workload_ms: [0.0, 2000.0],
        }
    }
}

fn unit(x: f64, [lo, hi]: [f64; 2]) -> f64 {
    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// Local state of one vehicle plus the shared system state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub cpu_ghz: f64,
    pub ram_gb: f64,
    pub speed_mps: f64,
    pub radio_snr_db: f64,
    pub server_workload_ms: f64,
    pub reservation: Reservation,
    pub features: [f64; OBS_DIM],
}

impl Observation {
    pub fn new(
        cpu_ghz: f64,
        ram_gb: f64,
        speed_mps: f64,
        radio_snr_db: f64,
        server_workload_ms: f64,
        reservation: Reservation,
        s: &ObservationScaling,
    ) -> Self {
        let features = [
            unit(cpu_ghz, s.cpu_ghz),
            unit(ram_gb, s.ram_gb),
            unit(speed_mps, s.speed_mps),
            unit(radio_snr_db, s.snr_db),
            unit(server_workload_ms, s.workload_ms),
            reservation.uplink.clamp(0.0, 1.0),
            reservation.downlink.clamp(0.0, 1.0),
            reservation.compute.clamp(0.0, 1.0),
        ];
        Self { cpu_ghz, ram_gb, speed_mps, radio_snr_db, server_workload_ms, reservation, features }
    }

    /// Observation of `vehicle` from the simulator state at the current tick.
    pub fn from_sim(sim: &Simulator, vehicle: usize, s: &ObservationScaling) -> Self {
        let v = &sim.vehicles[vehicle];
        Self::new(
            v.cpu_ghz,
            v.ram_gb,
            sim.speed_mps(vehicle),
            sim.radio_quality_db(vehicle),
            sim.server_workload_ms(),
            sim.reservation(),
            s,
        )
    }
}

/// Anything that maps an observation to a split ratio.
pub trait SplitPolicy: Sync {
    fn split(&self, obs: &Observation) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSchedule {
    pub initial_std: f64,
    pub final_std: f64,
    pub decay_epochs: usize,
}

impl NoiseSchedule {
    /// Linear decay from `initial_std` to `final_std`, constant afterwards.
    pub fn std_at(&self, epoch: usize) -> f64 {
        if self.decay_epochs == 0 || epoch >= self.decay_epochs {
            return self.final_std;
        }
        let f = epoch as f64 / self.decay_epochs as f64;
        self.initial_std + (self.final_std - self.initial_std) * f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageEstimator {
    MonteCarlo,
    Gae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub epochs: usize,
    pub transitions_per_epoch: usize,
    pub episode_length: usize,
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub optimizer: OptimizerKind,
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub advantage: AdvantageEstimator,
    pub gae_lambda: f64,
    pub update_epochs: usize,
    pub minibatch: usize,
    pub max_grad_norm: f64,
    /// Stop the inner loop once a minibatch's approximate KL divergence from
    /// the behaviour policy exceeds 1.5x this value; 0 disables.
    pub target_kl: f64,
    pub noise: NoiseSchedule,
    /// Lower bound of the per-epoch random reservation.
    pub reservation_min: f64,
    /// Independent rollouts per epoch, each under its own random reservation.
    pub reservations_per_epoch: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            epochs: 80,
            transitions_per_epoch: 4000,
            episode_length: 100,
            hidden: vec![128, 128],
            leaky_slope: 0.01,
            actor_lr: 1e-4,
            critic_lr: 3e-4,
            optimizer: OptimizerKind::Adam,
            clip_epsilon: 0.2,
            gamma: 0.0,
            advantage: AdvantageEstimator::MonteCarlo,
            gae_lambda: 0.95,
            update_epochs: 10,
            minibatch: 256,
            max_grad_norm: 1.0,
            target_kl: 0.0,
            noise: NoiseSchedule { initial_std: 0.3, final_std: 0.05, decay_epochs: 60 },
            reservation_min: 0.02,
            reservations_per_epoch: 16,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("training.{m}")));
        if self.transitions_per_epoch == 0
            || self.minibatch == 0
            || self.episode_length == 0
            || self.reservations_per_epoch == 0
        {
            return bad("transitions_per_epoch, minibatch, episode_length and reservations_per_epoch must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon must lie in (0, 1)");
        }
        if !(self.noise.initial_std > 0.0 && self.noise.final_std > 0.0) {
            return bad("noise std must be positive");
        }
        if !(0.0..=1.0).contains(&self.reservation_min) {
            return bad("reservation_min must lie in [0, 1]");
        }
        if !(self.target_kl >= 0.0 && self.max_grad_norm >= 0.0) {
            return bad("target_kl and max_grad_norm must be non-negative");
        }
        Ok(())
    }
}

/// Shared actor (sigmoid head, action mean) and critic (state value).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyPair {
    pub actor: Mlp,
    pub critic: Mlp,
    pub noise: NoiseSchedule,
    pub gamma: f64,
    pub clip_epsilon: f64,
}

/// Outcome of one [`act`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    /// Executed split ratio, in [0, 1].
    pub action: f64,
    /// Pre-clip Gaussian sample whose density is `log_prob`.
    pub raw_action: f64,
    pub mean: f64,
    pub log_prob: f64,
    pub value: f64,
}

pub fn gaussian_log_prob(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

impl PolicyPair {
    pub fn new<R: Rng + ?Sized>(cfg: &PpoConfig, rng: &mut R) -> Self {
        let sizes: Vec<usize> =
            std::iter::once(OBS_DIM).chain(cfg.hidden.iter().copied()).chain(std::iter::once(1)).collect();
        Self {
            actor: Mlp::new(&sizes, Head::Sigmoid, cfg.leaky_slope, rng),
            critic: Mlp::new(&sizes, Head::Identity, cfg.leaky_slope, rng),
            noise: cfg.noise,
            gamma: cfg.gamma,
            clip_epsilon: cfg.clip_epsilon,
        }
    }

    pub fn mean_action(&self, obs: &Observation) -> f64 {
        self.actor.forward(&obs.features).expect("observation dimension is fixed")[0]
    }

    pub fn value(&self, obs: &Observation) -> f64 {
        self.critic.forward(&obs.features).expect("observation dimension is fixed")[0]
    }

    /// SHA-256 over every actor and critic parameter.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for net in [&self.actor, &self.critic] {
            for l in net.layers() {
                for p in l.weights.iter().chain(&l.biases) {
                    h.update(p.to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }

    pub fn to_checkpoint(&self) -> PolicyCheckpoint {
        PolicyCheckpoint {
            actor: self.actor.to_checkpoint(),
            critic: self.critic.to_checkpoint(),
            noise: self.noise,
            gamma: self.gamma,
            clip_epsilon: self.clip_epsilon,
        }
    }

    pub fn from_checkpoint(c: &PolicyCheckpoint) -> Result<Self> {
        let actor = Mlp::from_checkpoint(&c.actor)?;
        let critic = Mlp::from_checkpoint(&c.critic)?;
        if actor.input_dim() != OBS_DIM || critic.input_dim() != OBS_DIM || actor.head() != Head::Sigmoid {
            return Err(Error::Checkpoint("networks do not match the observation/action layout".into()));
        }
        Ok(Self { actor, critic, noise: c.noise, gamma: c.gamma, clip_epsilon: c.clip_epsilon })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_checkpoint(&serde_json::from_str(&text)?)
    }
}

impl SplitPolicy for PolicyPair {
    fn split(&self, obs: &Observation) -> f64 {
        self.mean_action(obs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub actor: MlpCheckpoint,
    pub critic: MlpCheckpoint,
    pub noise: NoiseSchedule,
    pub gamma: f64,
    pub clip_epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActMode {
    /// Sample `clip(mean + N(0, std^2), 0, 1)`.
    Explore { std: f64 },
    /// Execute the mean; `std` only shapes the reported log-probability.
    Greedy { std: f64 },
}

pub fn act<R: Rng + ?Sized>(policy: &PolicyPair, obs: &Observation, mode: ActMode, rng: &mut R) -> Decision {
    let mean = policy.mean_action(obs);
    let value = policy.value(obs);
    let (raw, std) = match mode {
        ActMode::Explore { std } => {
            let z: f64 = StandardNormal.sample(rng);
            (mean + std * z, std)
        }
        ActMode::Greedy { std } => (mean, std),
    };
    Decision { action: raw.clamp(0.0, 1.0), raw_action: raw, mean, log_prob: gaussian_log_prob(raw, mean, std), value }
}

pub fn reward(latency_ms: f64, l_max_ms: f64) -> f64 {
    -latency_ms / l_max_ms
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: Observation,
    pub action: f64,
    pub raw_action: f64,
    pub reward: f64,
    pub next_observation: Observation,
    pub log_prob: f64,
    pub value: f64,
    pub done: bool,
    pub vehicle_id: usize,
    /// Index of the rollout within its batch; returns never cross rollouts.
    pub rollout: usize,
    pub decision_tick: u64,
    pub latency_ms: f64,
    pub exploration_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub returns: Vec<f64>,
    pub raw: Vec<f64>,
    /// `raw` shifted to zero mean and scaled to unit standard deviation.
    pub standardized: Vec<f64>,
}

/// Discounted returns and advantages, computed per vehicle over its own
/// decision sequence. Episode ends (`done`) reset the return; a sequence cut
/// off by the end of the batch is treated as ending there.
pub fn advantages(batch: &[Transition], gamma: f64) -> Result<Advantages> {
    estimate_advantages(batch, gamma, AdvantageEstimator::MonteCarlo, 1.0)
}

pub fn estimate_advantages(batch: &[Transition], gamma: f64, est: AdvantageEstimator, lambda: f64) -> Result<Advantages> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = batch.len();
    let mut returns = vec![0.0; n];
    let mut raw = vec![0.0; n];
    // Per vehicle: (running return, running GAE, value of the following state).
    let mut carry: BTreeMap<(usize, usize), (f64, f64, f64)> = BTreeMap::new();
    for i in (0..n).rev() {
        let t = &batch[i];
        let c = carry.entry((t.rollout, t.vehicle_id)).or_insert((0.0, 0.0, 0.0));
        if t.done {
            *c = (0.0, 0.0, 0.0);
        }
        let g = t.reward + gamma * c.0;
        returns[i] = g;
        raw[i] = match est {
            AdvantageEstimator::MonteCarlo => g - t.value,
            AdvantageEstimator::Gae => {
                let delta = t.reward + gamma * c.2 - t.value;
                delta + gamma * lambda * c.1
            }
        };
        *c = (g, raw[i], t.value);
    }
    if est == AdvantageEstimator::Gae {
        for (r, (a, t)) in returns.iter_mut().zip(raw.iter().zip(batch)) {
            *r = a + t.value;
        }
    }
    let m = raw.iter().sum::<f64>() / n as f64;
    let sd = (raw.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n as f64).sqrt();
    let standardized = raw.iter().map(|a| if sd > 1e-12 { (a - m) / sd } else { a - m }).collect();
    Ok(Advantages { returns, raw, standardized })
}

/// One term of the clipped surrogate objective.
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Mean probability ratio and mean clipped surrogate of `policy` on a batch.
pub fn surrogate(policy: &PolicyPair, batch: &[Transition], adv: &[f64]) -> (f64, f64) {
    let n = batch.len() as f64;
    let (mut ratio_sum, mut surr_sum) = (0.0, 0.0);
    for (t, &a) in batch.iter().zip(adv) {
        let mean = policy.mean_action(&t.observation);
        let ratio = (gaussian_log_prob(t.raw_action, mean, t.exploration_std) - t.log_prob).exp();
        ratio_sum += ratio;
        surr_sum += clipped_surrogate(ratio, a, policy.clip_epsilon);
    }
    (ratio_sum / n, surr_sum / n)
}

/// Optimizer state for both networks.
#[derive(Debug, Clone)]
pub struct PpoOptimizers {
    pub actor: Optimizer,
    pub critic: Optimizer,
}

impl PpoOptimizers {
    pub fn new(cfg: &PpoConfig) -> Self {
        Self { actor: Optimizer::new(cfg.optimizer, cfg.actor_lr), critic: Optimizer::new(cfg.optimizer, cfg.critic_lr) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    /// Mean ratio and surrogate before the first gradient step.
    pub initial_ratio: f64,
    pub initial_surrogate: f64,
    /// Statistics over the final pass through the batch.
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub surrogate: f64,
    pub value_loss: f64,
    /// Approximate KL divergence of the last evaluated minibatch.
    pub approx_kl: f64,
    /// Gradient steps taken.
    pub steps: usize,
}

/// Clipped-surrogate policy ascent and squared-error critic descent.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut PolicyPair,
    opt: &mut PpoOptimizers,
    batch: &[Transition],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateDiagnostics> {
    let adv = estimate_advantages(batch, policy.gamma, cfg.advantage, cfg.gae_lambda)?;
    let (initial_ratio, initial_surrogate) = surrogate(policy, batch, &adv.standardized);
    let eps = policy.clip_epsilon;
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut steps = 0;
    let mut last = UpdateDiagnostics {
        initial_ratio,
        initial_surrogate,
        mean_ratio: initial_ratio,
        clip_fraction: 0.0,
        surrogate: initial_surrogate,
        value_loss: f64::NAN,
        approx_kl: 0.0,
        steps: 0,
    };
    'outer: for epoch in 0..cfg.update_epochs.max(1) {
        order.shuffle(rng);
        let (mut ratio_sum, mut clipped, mut surr_sum, mut vloss_sum, mut seen) = (0.0, 0usize, 0.0, 0.0, 0usize);
        for mb in order.chunks(cfg.minibatch) {
            let m = mb.len() as f64;
            let mut kl = 0.0;
            let mut ga = Gradients::zeros_like(&policy.actor);
            let mut gc = Gradients::zeros_like(&policy.critic);
            for &i in mb {
                let t = &batch[i];
                let a = adv.standardized[i];
                let std = t.exploration_std;
                let tape = policy.actor.forward_with_tape(&t.observation.features)?;
                let mean = tape.output()[0];
                let log_ratio = gaussian_log_prob(t.raw_action, mean, std) - t.log_prob;
                let ratio = log_ratio.exp();
                kl += (ratio - 1.0) - log_ratio;
                let unclipped = ratio * a;
                let clip_term = ratio.clamp(1.0 - eps, 1.0 + eps) * a;
                let active = unclipped <= clip_term;
                if !active {
                    clipped += 1;
                }
                ratio_sum += ratio;
                surr_sum += unclipped.min(clip_term);
                // d(ratio * A)/d mean = ratio * A * (raw - mean) / std^2
                let d_mean = if active { unclipped * (t.raw_action - mean) / (std * std) } else { 0.0 };
                policy.actor.backward_into(tape, &[d_mean / m], &mut ga)?;

                let ctape = policy.critic.forward_with_tape(&t.observation.features)?;
                let v = ctape.output()[0];
                let err = v - adv.returns[i];
                vloss_sum += err * err;
                policy.critic.backward_into(ctape, &[2.0 * err / m], &mut gc)?;
            }
            if !ga.is_finite() || !gc.is_finite() || !surr_sum.is_finite() || !vloss_sum.is_finite() {
                return Err(Error::NonFiniteLoss(format!(
                    "update epoch {epoch}: surrogate {surr_sum}, value loss {vloss_sum}"
                )));
            }
            last.approx_kl = kl / m;
            if cfg.target_kl > 0.0 && last.approx_kl > 1.5 * cfg.target_kl {
                break 'outer;
            }
            seen += mb.len();
            if cfg.max_grad_norm > 0.0 {
                ga.clip_norm(cfg.max_grad_norm);
                gc.clip_norm(cfg.max_grad_norm);
            }
            opt.actor.step(&mut policy.actor, &ga, Direction::Ascent);
            opt.critic.step(&mut policy.critic, &gc, Direction::Descent);
            steps += 1;
            let n = seen as f64;
            last.steps = steps;
            last.mean_ratio = ratio_sum / n;
            last.clip_fraction = clipped as f64 / n;
            last.surrogate = surr_sum / n;
            last.value_loss = vloss_sum / n;
        }
    }
    Ok(last)
}

/// Settings shared by every rollout on a scenario.
#[derive(Debug, Clone)]
pub struct RolloutSpec {
    pub scaling: ObservationScaling,
    pub l_max_ms: f64,
    pub episode_length: usize,
    /// Abort when no offload completes for this many ticks.
    pub stall_timeout_ticks: u64,
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub transitions: Vec<Transition>,
    pub policy_fingerprint: String,
    pub ticks: u64,
}

impl Rollout {
    pub fn mean_latency_ms(&self) -> f64 {
        self.transitions.iter().map(|t| t.latency_ms).sum::<f64>() / self.transitions.len().max(1) as f64
    }

    pub fn mean_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum::<f64>() / self.transitions.len().max(1) as f64
    }
}

/// Runs one simulator with a frozen policy snapshot until `n_transitions`
/// offloads have completed.
pub fn collect_rollouts(
    policy: &PolicyPair,
    setup: &SimSetup,
    reservation: Reservation,
    spec: &RolloutSpec,
    n_transitions: usize,
    mode: ActMode,
    rng: &mut StreamRng,
) -> Result<Rollout> {
    let fingerprint = policy.fingerprint();
    let mut sim = Simulator::new(setup.clone(), reservation)?;
    let n_vehicles = sim.vehicles.len();
    let mut pending: Vec<Option<(Observation, Decision, u64)>> = vec![None; n_vehicles];
    let mut decisions = vec![0usize; n_vehicles];
    let mut transitions = Vec::with_capacity(n_transitions);
    let mut last_completion = 0u64;
    let std = match mode {
        ActMode::Explore { std } | ActMode::Greedy { std } => std,
    };
    'outer: while transitions.len() < n_transitions {
        for v in sim.idle_vehicles() {
            let obs = Observation::from_sim(&sim, v, &spec.scaling);
            let d = act(policy, &obs, mode, rng);
            sim.start_offload(v, d.action)?;
            pending[v] = Some((obs, d, sim.now()));
        }
        let done = sim.step();
        if done.is_empty() {
            if sim.now() - last_completion > spec.stall_timeout_ticks {
                return Err(Error::Stalled(sim.now() - last_completion));
            }
            continue;
        }
        last_completion = sim.now();
        for c in done {
            let (obs, d, tick) = pending[c.vehicle_id].take().expect("completed vehicle had a decision");
            decisions[c.vehicle_id] += 1;
            let latency = c.latency_ms();
            transitions.push(Transition {
                observation: obs,
                action: d.action,
                raw_action: d.raw_action,
                reward: reward(latency, spec.l_max_ms),
                next_observation: Observation::from_sim(&sim, c.vehicle_id, &spec.scaling),
                log_prob: d.log_prob,
                value: d.value,
                done: decisions[c.vehicle_id] % spec.episode_length == 0,
                vehicle_id: c.vehicle_id,
                rollout: 0,
                decision_tick: tick,
                latency_ms: latency,
                exploration_std: std,
            });
            if transitions.len() == n_transitions {
                break 'outer;
            }
        }
    }
    Ok(Rollout { transitions, policy_fingerprint: fingerprint, ticks: sim.now() })
}

/// Completions of one run of a fixed policy, with the age of the oldest
/// unfinished offload when the run was cut short.
#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub completions: Vec<CompletedTask>,
    pub censored_age_ms: Option<f64>,
    pub ticks: u64,
}

impl PolicyRun {
    pub fn latencies(&self) -> Vec<f64> {
        self.completions.iter().map(CompletedTask::latency_ms).collect()
    }

    /// Worst observed latency, counting unfinished offloads by their age.
    pub fn max_latency_ms(&self) -> Option<f64> {
        self.latencies().into_iter().chain(self.censored_age_ms).reduce(f64::max)
    }
}

/// Drives an existing simulator with a deterministic policy until `n`
/// further offloads complete or `timeout_ticks` elapse.
pub fn run_policy(
    sim: &mut Simulator,
    policy: &dyn SplitPolicy,
    scaling: &ObservationScaling,
    n: usize,
    timeout_ticks: u64,
) -> Result<PolicyRun> {
    let start = sim.now();
    let mut completions = Vec::with_capacity(n);
    while completions.len() < n {
        if sim.now() - start >= timeout_ticks {
            let now = sim.now();
            let age = sim.tasks().map(|t| (now - t.created_at) as f64).reduce(f64::max);
            return Ok(PolicyRun { completions, censored_age_ms: age, ticks: now - start });
        }
        for v in sim.idle_vehicles() {
            let obs = Observation::from_sim(sim, v, scaling);
            let a = policy.split(&obs);
            sim.start_offload(v, if a.is_finite() { a.clamp(0.0, 1.0) } else { 0.0 })?;
        }
        for c in sim.step() {
            if completions.len() < n {
                completions.push(c);
            }
        }
    }
    Ok(PolicyRun { completions, censored_age_ms: None, ticks: sim.now() - start })
}

/// Seeded exploration stream for a training epoch.
pub fn exploration_rng(seed: u64, epoch: usize, rollout: usize) -> StreamRng {
    rng::stream(seed, &[rng::EXPLORATION, epoch as u64, rollout as u64])
}
