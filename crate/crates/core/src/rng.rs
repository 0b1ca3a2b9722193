//! Counter-based random streams.
//!
//! Every Monte Carlo trial and every training sample draws from its own
//! ChaCha stream keyed by `(seed, domain)` and selected by a trial index, so
//! results do not depend on how trials are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as StreamRng;

/// Stream domains used by the crate. Distinct domains never share a key.
pub mod domain {
    pub const SWEEP: u64 = 0x5357_4545_5000_0000;
    pub const TRAIN: u64 = 0x5452_4149_4e00_0000;
    pub const CALIBRATION: u64 = 0x4341_4c49_4200_0000;
    pub const EVAL: u64 = 0x4556_414c_0000_0000;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG for trial `index` of `domain` under `seed`.
pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(domain)));
    rng.set_stream(index);
    rng
}

/// Packs a two-level counter (e.g. grid point and trial) into one stream id.
pub fn index2(outer: u64, inner: u64) -> u64 {
    (outer << 40) ^ inner
}
