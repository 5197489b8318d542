//! Window-level reservation control.
//!
//! A Gaussian process with a unit squared-exponential kernel regresses the
//! worst latency of a window on the reservation that produced it. Central
//! differences of the posterior mean stand in for the latency gradient in a
//! projected primal-dual step on the reservation and the multiplier of the
//! latency constraint.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simcore::Reservation;

pub fn se_kernel(a: &[f64; 3], b: &[f64; 3], length_scale: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (-0.5 * d2 / (length_scale * length_scale)).exp()
}

/// Reservation/latency pairs, oldest evicted first once full.
#[derive(Debug, Clone, PartialEq)]
pub struct GprDataset {
    pub inputs: VecDeque<[f64; 3]>,
    pub targets: VecDeque<f64>,
    pub capacity: usize,
}

impl GprDataset {
    pub fn new(capacity: usize) -> Self {
        Self { inputs: VecDeque::new(), targets: VecDeque::new(), capacity: capacity.max(1) }
    }

    pub fn push(&mut self, x: [f64; 3], y: f64) {
        if self.inputs.len() == self.capacity {
            self.inputs.pop_front();
            self.targets.pop_front();
        }
        self.inputs.push_back(x);
        self.targets.push_back(y);
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GprConfig {
    pub noise_variance: f64,
    pub length_scale: f64,
    /// Fit on targets centred by their mean and scaled by their std.
    pub standardize: bool,
}

impl Default for GprConfig {
    fn default() -> Self {
        Self { noise_variance: 1e-4, length_scale: 1.0, standardize: true }
    }
}

/// A fitted posterior.
#[derive(Debug, Clone)]
pub struct GprModel {
    cfg: GprConfig,
    inputs: Vec<[f64; 3]>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
    y_mean: f64,
    y_scale: f64,
}

impl GprModel {
    pub fn fit(data: &GprDataset, cfg: GprConfig) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = data.len();
        let inputs: Vec<[f64; 3]> = data.inputs.iter().copied().collect();
        let (y_mean, y_scale) = if cfg.standardize {
            let m = data.targets.iter().sum::<f64>() / n as f64;
            let sd = (data.targets.iter().map(|y| (y - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            (m, if sd > 1e-12 { sd } else { 1.0 })
        } else {
            (0.0, 1.0)
        };
        let k = DMatrix::from_fn(n, n, |i, j| {
            se_kernel(&inputs[i], &inputs[j], cfg.length_scale) + if i == j { cfg.noise_variance } else { 0.0 }
        });
        let y = DVector::from_iterator(n, data.targets.iter().map(|t| (t - y_mean) / y_scale));
        let chol = k.cholesky().ok_or(Error::SingularSystem)?;
        let alpha = chol.solve(&y);
        Ok(Self { cfg, inputs, chol, alpha, y_mean, y_scale })
    }

    fn k_star(&self, x: &[f64; 3]) -> DVector<f64> {
        DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|xi| se_kernel(xi, x, self.cfg.length_scale)))
    }

    pub fn mean(&self, x: &[f64; 3]) -> f64 {
        self.y_mean + self.y_scale * self.k_star(x).dot(&self.alpha)
    }

    /// Posterior mean and variance in target units.
    pub fn posterior(&self, x: &[f64; 3]) -> (f64, f64) {
        let ks = self.k_star(x);
        let mean = self.y_mean + self.y_scale * ks.dot(&self.alpha);
        let v = self.chol.solve(&ks);
        let var = (1.0 - ks.dot(&v)).max(0.0);
        (mean, var * self.y_scale * self.y_scale)
    }

    /// Central difference of the posterior mean, per coordinate. Probes are
    /// clipped into [0, 1] and the difference divided by their actual spread.
    pub fn expected_gradient(&self, x: &[f64; 3], tau: f64) -> [f64; 3] {
        let mut g = [0.0; 3];
        for (m, gm) in g.iter_mut().enumerate() {
            let (mut hi, mut lo) = (*x, *x);
            hi[m] = (x[m] + tau).min(1.0);
            lo[m] = (x[m] - tau).max(0.0);
            let span = hi[m] - lo[m];
            if span > 0.0 {
                *gm = (self.mean(&hi) - self.mean(&lo)) / span;
            }
        }
        g
    }
}

/// Worst completed latency of a window.
pub fn observe_window(latencies_ms: &[f64]) -> Result<f64> {
    latencies_ms.iter().copied().reduce(f64::max).ok_or(Error::EmptyWindow)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// `X + eta1 (1 - lambda grad)`: drift toward more resources.
    AsPrinted,
    /// `X - eta1 (alpha + lambda grad)`: descent on the Lagrangian.
    Descent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub eta1: f64,
    pub eta2: f64,
    pub tau: f64,
    pub weights: [f64; 3],
    pub update_rule: UpdateRule,
    /// Latencies enter the gradient and multiplier updates in this unit.
    pub latency_unit_ms: f64,
    pub warmup_windows: usize,
    pub guided_windows: usize,
    pub window_offloads: usize,
    /// A window that cannot finish its offloads in this time is scored by
    /// the age of its oldest unfinished offload.
    pub window_timeout_ms: u64,
    pub warmup_min: f64,
    pub dataset_capacity: usize,
    pub gpr: GprConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            eta1: 0.02,
            eta2: 0.02,
            tau: 0.05,
            weights: [1.0, 1.0, 1.0],
            update_rule: UpdateRule::Descent,
            latency_unit_ms: 50.0,
            warmup_windows: 40,
            guided_windows: 60,
            window_offloads: 100,
            window_timeout_ms: 120_000,
            warmup_min: 0.02,
            dataset_capacity: 512,
            gpr: GprConfig::default(),
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("reservation.{m}")));
        if !(self.eta1 > 0.0 && self.eta2 > 0.0 && self.tau > 0.0 && self.latency_unit_ms > 0.0) {
            return bad("eta1, eta2, tau and latency_unit_ms must be positive");
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("weights must be non-negative");
        }
        if self.window_offloads == 0 || self.dataset_capacity == 0 {
            return bad("window_offloads and dataset_capacity must be positive");
        }
        if !(self.gpr.noise_variance >= 0.0 && self.gpr.length_scale > 0.0) {
            return bad("gpr.noise_variance must be non-negative and gpr.length_scale positive");
        }
        if !(0.0..=1.0).contains(&self.warmup_min) {
            return bad("warmup_min must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Primal reservation and dual multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservationState {
    pub reservation: Reservation,
    pub lambda: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub tau: f64,
    pub l_max_ms: f64,
    pub weights: [f64; 3],
    pub rule: UpdateRule,
    pub latency_unit_ms: f64,
}

impl ReservationState {
    pub fn new(reservation: Reservation, l_max_ms: f64, cfg: &ControllerConfig) -> Self {
        Self {
            reservation,
            lambda: 0.0,
            eta1: cfg.eta1,
            eta2: cfg.eta2,
            tau: cfg.tau,
            l_max_ms,
            weights: cfg.weights,
            rule: cfg.update_rule,
            latency_unit_ms: cfg.latency_unit_ms,
        }
    }

    pub fn usage(&self) -> f64 {
        self.reservation.usage(self.weights)
    }

    /// One projected primal step using the current multiplier, then one
    /// projected dual step on the observed constraint violation.
    pub fn update_reservation(&self, gradient_ms: [f64; 3], l_h_ms: f64) -> Result<Self> {
        if gradient_ms.iter().any(|g| !g.is_finite()) || !l_h_ms.is_finite() {
            return Err(Error::NonFiniteGradient(gradient_ms));
        }
        let unit = self.latency_unit_ms;
        let x = self.reservation.to_array();
        let mut next = [0.0; 3];
        for m in 0..3 {
            let g = gradient_ms[m] / unit;
            let step = match self.rule {
                UpdateRule::AsPrinted => self.eta1 * (1.0 - self.lambda * g),
                UpdateRule::Descent => -self.eta1 * (self.weights[m] + self.lambda * g),
            };
            next[m] = (x[m] + step).clamp(0.0, 1.0);
        }
        let lambda = (self.lambda + self.eta2 * (l_h_ms - self.l_max_ms) / unit).max(0.0);
        Ok(Self { reservation: Reservation::from_array(next), lambda, ..*self })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn cfg(noise: f64, standardize: bool) -> GprConfig {
        GprConfig { noise_variance: noise, length_scale: 1.0, standardize }
    }

    fn state(rule: UpdateRule, lambda: f64) -> ReservationState {
        let c = ControllerConfig { update_rule: rule, latency_unit_ms: 1.0, ..Default::default() };
        ReservationState { lambda, ..ReservationState::new(Reservation::uniform(0.5), 500.0, &c) }
    }

    #[test]
    fn single_point_interpolates() {
        let mut d = GprDataset::new(8);
        d.push([0.3, 0.4, 0.5], 420.0);
        let m = GprModel::fit(&d, cfg(0.0, false)).unwrap();
        let (mu, var) = m.posterior(&[0.3, 0.4, 0.5]);
        assert!((mu - 420.0).abs() < 1e-9);
        assert!(var.abs() < 1e-12);
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let mut d = GprDataset::new(8);
        d.push([0.3, 0.4, 0.5], 1.7);
        d.push([0.9, 0.1, 0.5], -0.4);
        let m = GprModel::fit(&d, cfg(1e-4, false)).unwrap();
        let (mu, var) = m.posterior(&[100.0, 100.0, 100.0]);
        assert!(mu.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_inputs_without_noise_are_singular() {
        let mut d = GprDataset::new(8);
        d.push([0.5; 3], 1.0);
        d.push([0.5; 3], 2.0);
        assert!(matches!(GprModel::fit(&d, cfg(0.0, false)), Err(Error::SingularSystem)));
        assert!(GprModel::fit(&d, cfg(1e-4, false)).is_ok());
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(GprModel::fit(&GprDataset::new(4), GprConfig::default()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn dataset_evicts_oldest() {
        let mut d = GprDataset::new(2);
        d.push([0.1; 3], 1.0);
        d.push([0.2; 3], 2.0);
        d.push([0.3; 3], 3.0);
        assert_eq!(d.len(), 2);
        assert_eq!(d.targets, [2.0, 3.0]);
    }

    #[test]
    fn variance_nonnegative_everywhere() {
        let mut r = rng::stream(11, &[]);
        let mut d = GprDataset::new(64);
        for _ in 0..40 {
            let x = [r.random::<f64>(), r.random::<f64>(), r.random::<f64>()];
            d.push(x, 300.0 + 200.0 * r.random::<f64>());
        }
        let m = GprModel::fit(&d, GprConfig::default()).unwrap();
        for _ in 0..1000 {
            let q = [r.random_range(-1.0..2.0), r.random_range(-1.0..2.0), r.random_range(-1.0..2.0)];
            assert!(m.posterior(&q).1 >= 0.0);
        }
    }

    fn grid(f: impl Fn(&[f64; 3]) -> f64) -> GprDataset {
        let mut d = GprDataset::new(512);
        for i in 0..20 {
            for j in 0..3 {
                for k in 0..3 {
                    let x = [i as f64 / 19.0, j as f64 / 2.0, k as f64 / 2.0];
                    d.push(x, f(&x));
                }
            }
        }
        d
    }

    #[test]
    fn constant_target_has_zero_gradient() {
        let m = GprModel::fit(&grid(|_| 350.0), cfg(1e-6, true)).unwrap();
        for g in m.expected_gradient(&[0.5, 0.5, 0.5], 0.05) {
            assert!(g.abs() < 1e-6, "{g}");
        }
    }

    #[test]
    fn linear_target_slope_recovered() {
        let m = GprModel::fit(&grid(|x| -100.0 * x[0]), cfg(1e-6, true)).unwrap();
        let g = m.expected_gradient(&[0.5, 0.5, 0.5], 0.05);
        assert!((g[0] + 100.0).abs() < 5.0, "{g:?}");
        assert!(g[1].abs() < 5.0 && g[2].abs() < 5.0);
    }

    #[test]
    fn halving_tau_is_consistent() {
        let m = GprModel::fit(&grid(|x| 500.0 * (-2.0 * x[0]).exp() + 80.0 * x[1] * x[1]), cfg(1e-6, true)).unwrap();
        let x = [0.4, 0.5, 0.5];
        let g1 = m.expected_gradient(&x, 0.05);
        let g2 = m.expected_gradient(&x, 0.025);
        let g4 = m.expected_gradient(&x, 0.0125);
        for k in 0..2 {
            // Central differences converge at second order.
            let d12 = (g1[k] - g2[k]).abs();
            let d24 = (g2[k] - g4[k]).abs();
            assert!(d24 <= 0.5 * d12 + 1e-6, "coord {k}: {d12} {d24}");
        }
    }

    #[test]
    fn probes_clip_at_boundary() {
        let m = GprModel::fit(&grid(|x| 10.0 * x[0]), cfg(1e-6, true)).unwrap();
        let g = m.expected_gradient(&[1.0, 0.0, 0.5], 0.05);
        assert!((g[0] - 10.0).abs() < 1.0, "{g:?}");
    }

    #[test]
    fn window_max() {
        assert_eq!(observe_window(&[320.0, 495.0, 410.0]).unwrap(), 495.0);
        assert_eq!(observe_window(&[77.0]).unwrap(), 77.0);
        assert!(matches!(observe_window(&[]), Err(Error::EmptyWindow)));
    }

    #[test]
    fn as_printed_unconstrained_drift() {
        let s = state(UpdateRule::AsPrinted, 0.0).update_reservation([-50.0, 3.0, 0.0], 400.0).unwrap();
        assert_eq!(s.lambda, 0.0);
        for x in s.reservation.to_array() {
            assert!((x - 0.52).abs() < 1e-15);
        }
    }

    #[test]
    fn as_printed_arithmetic() {
        let s = state(UpdateRule::AsPrinted, 2.0);
        let n = s.update_reservation([10.0, 0.0, 0.0], 500.0).unwrap();
        let dx: Vec<f64> =
            n.reservation.to_array().iter().zip(s.reservation.to_array()).map(|(a, b)| a - b).collect();
        assert!((dx[0] + 0.38).abs() < 1e-12);
        assert!((dx[1] - 0.02).abs() < 1e-12 && (dx[2] - 0.02).abs() < 1e-12);
    }

    #[test]
    fn clip_holds_at_upper_bound() {
        let mut s = state(UpdateRule::AsPrinted, 0.0);
        s.reservation = Reservation::full();
        let n = s.update_reservation([0.0; 3], 100.0).unwrap();
        assert_eq!(n.reservation, Reservation::full());
    }

    #[test]
    fn descent_arithmetic() {
        let s = state(UpdateRule::Descent, 2.0);
        let n = s.update_reservation([10.0, 0.0, -10.0], 500.0).unwrap();
        let x = n.reservation.to_array();
        assert!((x[0] - (0.5 - 0.02 * 21.0)).abs() < 1e-12);
        assert!((x[1] - 0.48).abs() < 1e-12);
        assert!((x[2] - 0.88).abs() < 1e-12);
    }

    #[test]
    fn multiplier_tracks_violation() {
        let s = state(UpdateRule::Descent, 0.0);
        assert_eq!(s.update_reservation([0.0; 3], 480.0).unwrap().lambda, 0.0);
        let up = s.update_reservation([0.0; 3], 510.0).unwrap().lambda;
        assert!((up - 0.2).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let s = state(UpdateRule::Descent, 0.0);
        assert!(matches!(s.update_reservation([f64::NAN, 0.0, 0.0], 1.0), Err(Error::NonFiniteGradient(_))));
    }
}
