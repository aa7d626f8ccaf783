//! Deterministic seed derivation.
//!
//! Every random stream in the pipeline (per-node noise, clock offsets, BPSK
//! chips, Monte-Carlo trials) is keyed by a tuple of integers folded through
//! SplitMix64, so results never depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const TAG_NOISE: u64 = 0x6e_6f69_7365;
pub(crate) const TAG_CLOCK: u64 = 0x63_6c6f_636b;
pub(crate) const TAG_CHIPS: u64 = 0x63_6869_7073;
pub(crate) const TAG_TRIAL: u64 = 0x74_7269_616c;
pub(crate) const TAG_CARRIER: u64 = 0x6361_7272;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into `base`, order-sensitively.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub(crate) fn rng_for(base: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}
