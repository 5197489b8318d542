//! Compares back-propagated gradients of a small network against central
//! finite differences.

use edge_offload::neural::{Head, Mlp};
use edge_offload::rng;

fn main() -> edge_offload::Result<()> {
    let h = 1e-5;
    let x = [0.2, -0.4, 0.9, 0.1];
    for head in [Head::Identity, Head::Sigmoid] {
        let mut net = Mlp::new(&[4, 8, 8, 1], head, 0.01, &mut rng::stream(3, &[]));
        let tape = net.forward_with_tape(&x)?;
        let analytic: Vec<f64> = net.backward(tape, &[1.0])?.iter().collect();
        let mut worst: f64 = 0.0;
        for (i, g) in analytic.iter().enumerate() {
            let p = net.param(i);
            net.set_param(i, p + h);
            let up = net.forward(&x)?[0];
            net.set_param(i, p - h);
            let down = net.forward(&x)?[0];
            net.set_param(i, p);
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-6));
        }
        println!("{head:?} head: {} parameters, worst relative error {worst:.2e}", net.param_count());
    }
    Ok(())
}
