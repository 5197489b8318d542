mod common;

use edge_offload::date::BaselinePolicy;
use edge_offload::marl::{self, clipped_surrogate, ActMode, Observation, PolicyPair, PpoConfig};
use edge_offload::radio;
use edge_offload::reserve::{ControllerConfig, GprConfig, GprDataset, GprModel, ReservationState, UpdateRule};
use edge_offload::simcore::{schedule_edge, Simulator};
use edge_offload::{rng, Reservation};
use proptest::prelude::*;

fn unit3() -> impl Strategy<Value = [f64; 3]> {
    [0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64]
}

fn small_policy(seed: u64) -> PolicyPair {
    let cfg = PpoConfig { hidden: vec![8, 8], ..Default::default() };
    PolicyPair::new(&cfg, &mut rng::stream(seed, &[]))
}

proptest! {
    #[test]
    fn bandwidth_shares_sum_to_reservation(n in 1usize..50, x in 0.0..=1.0f64, bw in 1e5..1e8f64) {
        let total = radio::bandwidth_share(n, x, bw) * n as f64;
        prop_assert!((total - x * bw).abs() <= 1e-9 * bw);
    }

    #[test]
    fn scheduler_picks_first_minimum(loads in prop::collection::vec(0.0..500.0f64, 1..8)) {
        let i = schedule_edge(&loads);
        let min = loads.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(loads[i], min);
        prop_assert!(loads[..i].iter().all(|&l| l > min));
    }

    #[test]
    fn posterior_variance_non_negative(
        pts in prop::collection::vec((unit3(), -3.0..3.0f64), 1..12),
        q in unit3(),
        noise in 0.0..0.1f64,
    ) {
        let mut d = GprDataset::new(32);
        for (x, y) in &pts {
            d.push(*x, *y);
        }
        if let Ok(m) = GprModel::fit(&d, GprConfig { noise_variance: noise.max(1e-8), ..Default::default() }) {
            let (mu, var) = m.posterior(&q);
            prop_assert!(mu.is_finite());
            prop_assert!(var >= 0.0);
        }
    }

    #[test]
    fn dual_update_stays_feasible(
        x in unit3(),
        lambda in 0.0..20.0f64,
        grad in [-5e3..5e3f64, -5e3..5e3f64, -5e3..5e3f64],
        l_h in 0.0..3000.0f64,
        printed in any::<bool>(),
    ) {
        let rule = if printed { UpdateRule::AsPrinted } else { UpdateRule::Descent };
        let cfg = ControllerConfig { update_rule: rule, ..Default::default() };
        let mut s = ReservationState::new(Reservation::from_array(x), 500.0, &cfg);
        s.lambda = lambda;
        let n = s.update_reservation(grad, l_h).unwrap();
        prop_assert!(n.lambda >= 0.0);
        prop_assert!(n.reservation.is_valid());
    }

    #[test]
    fn clipped_surrogate_bounded_by_unclipped(ratio in 0.0..5.0f64, adv in -5.0..5.0f64, eps in 0.01..0.5f64) {
        prop_assert!(clipped_surrogate(ratio, adv, eps) <= ratio * adv + 1e-12);
    }

    #[test]
    fn actions_are_valid_splits(
        f in prop::collection::vec(-0.5..1.5f64, 8),
        std in 0.01..1.0f64,
        seed in 0u64..1000,
    ) {
        let p = small_policy(seed % 7);
        let r = Reservation::from_array([f[5].clamp(0.0, 1.0), f[6].clamp(0.0, 1.0), f[7].clamp(0.0, 1.0)]);
        let o = Observation::new(1.0 + 3.0 * f[0], 32.0 * f[1], 20.0 * f[2], 80.0 * f[3], 2000.0 * f[4], r, &Default::default());
        prop_assert!(o.features.iter().all(|v| (0.0..=1.0).contains(v)));
        let d = marl::act(&p, &o, ActMode::Explore { std }, &mut rng::stream(seed, &[]));
        prop_assert!((0.0..=1.0).contains(&d.action));
        prop_assert!(d.log_prob.is_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn more_compute_never_slows_the_edge(seed in 0u64..1000, lo in 0.05..0.9f64, extra in 0.01..0.5f64) {
        let cfg = common::quick_config();
        let hi = (lo + extra).min(1.0);
        let edge_ms = |x: f64| {
            let mut sim = Simulator::new(cfg.sim_setup(seed, 3), Reservation::from_array([1.0, 1.0, x])).unwrap();
            let run = marl::run_policy(&mut sim, &BaselinePolicy::FullOffload, &cfg.observation, 12, 1_000_000).unwrap();
            // k-th task of each vehicle, which carries the same demand in both runs.
            let mut per_vehicle = vec![Vec::new(); 3];
            let mut sorted = run.completions.clone();
            sorted.sort_by_key(|c| c.task_id);
            for c in sorted {
                per_vehicle[c.vehicle_id].push(c.durations.edge_compute);
            }
            per_vehicle
        };
        let (fast, slow) = (edge_ms(hi), edge_ms(lo));
        for (f, s) in fast.iter().zip(&slow) {
            prop_assert!(f.iter().zip(s).all(|(a, b)| a <= b), "{:?} vs {:?}", f, s);
        }
    }

    #[test]
    fn rollouts_are_deterministic(seed in 0u64..1000) {
        let cfg = common::quick_config();
        let p = small_policy(seed);
        let setup = cfg.sim_setup(seed, 3);
        let collect = || {
            marl::collect_rollouts(
                &p,
                &setup,
                Reservation::full(),
                &cfg.rollout_spec(),
                30,
                ActMode::Explore { std: 0.2 },
                &mut marl::exploration_rng(seed, 0, 0),
            )
            .unwrap()
        };
        let (a, b) = (collect(), collect());
        prop_assert_eq!(a.transitions.len(), 30);
        prop_assert_eq!(&a.policy_fingerprint, &b.policy_fingerprint);
        for (x, y) in a.transitions.iter().zip(&b.transitions) {
            prop_assert_eq!(x.raw_action.to_bits(), y.raw_action.to_bits());
            prop_assert_eq!(x.latency_ms.to_bits(), y.latency_ms.to_bits());
            prop_assert_eq!(x.decision_tick, y.decision_tick);
        }
        for v in 0..3 {
            let ticks: Vec<u64> = a.transitions.iter().filter(|t| t.vehicle_id == v).map(|t| t.decision_tick).collect();
            prop_assert!(ticks.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
