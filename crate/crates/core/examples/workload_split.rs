//! Draws one task and shows how the split ratio moves work between the
//! vehicle, the uplink and the edge server.

use edge_offload::rng;
use edge_offload::workload::{self, WorkloadStats};

fn main() -> edge_offload::Result<()> {
    let stats = WorkloadStats::default();
    let demand = workload::sample_demands(&stats, &mut rng::stream(7, &[]));
    println!(
        "frame {:.1} KB, local {:.0} ms, edge {:.0} ms at unit capacity",
        demand.image_bytes / 1e3,
        demand.local_full_ms,
        demand.edge_full_ms
    );
    println!("{:>5} {:>9} {:>10} {:>8}", "split", "local ms", "uplink KB", "edge ms");
    for a in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let d = workload::split(&demand, a)?;
        println!("{a:>5.2} {:>9.1} {:>10.1} {:>8.1}", d.local_ms, d.uplink_bytes / 1e3, d.edge_ms_at_unit_capacity);
    }
    Ok(())
}
