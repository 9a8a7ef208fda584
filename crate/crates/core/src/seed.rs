//! Reproducible, order-independent random streams.
//!
//! Every unit of Monte Carlo work (one trial, one calibration set) draws from
//! its own ChaCha stream keyed by `(seed, domain, index)`. Results therefore do
//! not depend on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains, so that different experiments never share randomness.
pub mod domain {
    pub const FORWARD_BRIDGE: u64 = 1;
    pub const CALIBRATION_SETS: u64 = 2;
    pub const PLANNING: u64 = 3;
    pub const FIGURE: u64 = 4;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(domain)));
    rng.set_stream(index);
    rng
}
