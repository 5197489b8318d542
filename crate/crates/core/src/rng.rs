//! Seed derivation for independent, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a list of labels.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(mix64(seed), |acc, &l| mix64(acc ^ mix64(l.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

pub fn stream(seed: u64, labels: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, labels))
}

// Stream labels.
pub const DEMANDS: u64 = 1;
pub const TRACE: u64 = 2;
pub const SHADOWING: u64 = 3;
pub const HARDWARE: u64 = 4;
pub const POLICY: u64 = 5;
pub const EXPLORATION: u64 = 6;
pub const RESERVATION: u64 = 7;
pub const MINIBATCH: u64 = 8;
pub const EVALUATION: u64 = 9;
pub const EPISODE: u64 = 10;
