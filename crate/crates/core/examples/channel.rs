//! Path loss, SNR and Shannon rate versus distance from the base station,
//! and how a reserved share of bandwidth is split among active senders.
//!
//! ```text
//! cargo run --release --example channel
//! ```

use edge_offload::radio::{self, Link};

fn main() {
    let cfg = radio::ChannelConfig::default();
    let bw = cfg.max_bandwidth(Link::Uplink);
    println!("breakpoint distance {:.1} m", cfg.breakpoint_m());
    println!("{:>8} {:>10} {:>9} {:>12}", "dist m", "loss dB", "SNR dB", "rate Mbit/s");
    for d in [5.0, 10.0, 25.0, 50.0, 100.0, 200.0, 400.0] {
        let pl = radio::path_loss_db(d, &cfg);
        println!(
            "{d:>8.0} {pl:>10.1} {:>9.1} {:>12.2}",
            radio::snr_db(pl, bw, &cfg),
            radio::shannon_rate(bw, pl, &cfg) / 1e6
        );
    }

    // Four vehicles on the uplink with 40% of the band reserved.
    let positions = [[30.0, 25.0], [60.0, 25.0], [25.0, 120.0], [-80.0, -80.0]];
    let rates = radio::per_vehicle_rate(&[0, 1, 2, 3], 0.4, &positions, [25.0, 25.0], Link::Uplink, &cfg);
    println!("\nshare per sender {:.2} MHz", radio::bandwidth_share(4, 0.4, bw) / 1e6);
    for (v, r) in rates {
        println!("vehicle {v} at {:?}: {:.2} Mbit/s", positions[v], r / 1e6);
    }
}
