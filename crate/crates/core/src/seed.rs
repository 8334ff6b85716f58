//! Deterministic seed derivation.
//!
//! Every parallelisable unit of work (an instance in a batch, a cell of the
//! utility matrix, ...) gets its own generator seeded from `(seed, stream,
//! index)`, so results do not depend on thread count or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `seed` with an index into a fresh, well-separated seed.
pub fn derive(seed: u64, index: u64) -> u64 {
    splitmix(splitmix(seed) ^ splitmix(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Two-level derivation for `(seed, stream, index)`.
pub fn derive2(seed: u64, stream: u64, index: u64) -> u64 {
    derive(derive(seed, stream), index)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named streams so unrelated consumers of one seed never collide.
pub mod stream {
    pub const SAMPLE: u64 = 1;
    pub const DECODE: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const INIT: u64 = 5;
    pub const PROXY: u64 = 6;
    pub const CELL: u64 = 7;
    pub const FLOW: u64 = 8;
    pub const PSA: u64 = 9;
    pub const DE: u64 = 10;
    pub const LANDSCAPE: u64 = 11;
    pub const TARGET: u64 = 12;
}
