//! Split-computation offloading for vehicular edge networks.
//!
//! The crate couples a deterministic 1 ms time-driven simulator of
//! asynchronous vehicle offloads (local compute, uplink, edge FIFO queues,
//! downlink broadcast) with a two-timescale controller:
//!
//! * per offload, a shared actor-critic policy trained with PPO picks the
//!   fraction of computation kept on the vehicle ([`marl`]);
//! * per window of offloads, a Gaussian-process model of the worst-case
//!   latency drives a projected primal-dual update of the reserved uplink,
//!   downlink and edge-compute fractions ([`reserve`]).
//!
//! [`date`] wires both together with the comparison policies, and
//! [`config`] / [`artifacts`] back the command-line runner.

pub mod artifacts;
pub mod config;
pub mod date;
pub mod error;
pub mod marl;
pub mod neural;
pub mod radio;
pub mod reserve;
pub mod rng;
pub mod simcore;
pub mod stats;
pub mod workload;

pub use error::{Error, Result};
pub use simcore::Reservation;
