//! Fits the latency surrogate on a synthetic response surface and runs the
//! primal-dual reservation update against it.
//!
//! The synthetic worst-case latency falls as any resource grows, so the
//! update should settle where it meets the requirement at low usage.

use edge_offload::reserve::{ControllerConfig, GprDataset, GprModel, ReservationState};
use edge_offload::{rng, Reservation};
use rand::Rng;

fn latency(x: [f64; 3]) -> f64 {
    180.0 + 90.0 / (0.1 + x[0]) + 40.0 / (0.1 + x[1]) + 60.0 / (0.1 + x[2])
}

fn main() -> edge_offload::Result<()> {
    let cfg = ControllerConfig::default();
    let l_max = 500.0;
    let mut r = rng::stream(11, &[]);
    let mut data = GprDataset::new(cfg.dataset_capacity);
    for _ in 0..cfg.warmup_windows {
        let x = Reservation::random(&mut r, cfg.warmup_min, 1.0).to_array();
        data.push(x, latency(x) + r.random_range(-10.0..10.0));
    }
    let mut state = ReservationState::new(Reservation::full(), l_max, &cfg);
    for w in 0..cfg.guided_windows {
        let x = state.reservation.to_array();
        let l_h = latency(x) + r.random_range(-10.0..10.0);
        data.push(x, l_h);
        let model = GprModel::fit(&data, cfg.gpr)?;
        let grad = model.expected_gradient(&x, cfg.tau);
        if w % 6 == 0 {
            println!(
                "window {w:>2}  {}  usage {:.3}  l_H {l_h:>5.0}  lambda {:.3}  grad [{:.0}, {:.0}, {:.0}]",
                state.reservation,
                state.usage(),
                state.lambda,
                grad[0],
                grad[1],
                grad[2]
            );
        }
        state = state.update_reservation(grad, l_h)?;
    }
    println!("final {}  usage {:.3}  latency {:.0} ms", state.reservation, state.usage(), latency(state.reservation.to_array()));
    Ok(())
}
