//! Counter-based random streams keyed by (master seed, realization, stage).

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stage tags. New stages take new tags, leaving existing streams untouched.
pub mod stage {
    pub const SAMPLE: u64 = 0;
    pub const RESAMPLE: u64 = 1;
    pub const PROBE: u64 = 2;
    pub const SHIFT: u64 = 3;
}

/// Words reserved per stage inside one stream.
const STAGE_STRIDE: u128 = 1 << 56;

pub fn stream(master: u64, realization: u64, stage: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master);
    rng.set_stream(realization);
    rng.set_word_pos(stage as u128 * STAGE_STRIDE);
    rng
}

/// Single-stage generator from a bare seed.
pub fn from_seed(seed: u64) -> ChaCha12Rng {
    stream(seed, 0, stage::SAMPLE)
}
