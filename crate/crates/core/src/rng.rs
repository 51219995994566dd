//! Seeded random streams.
//!
//! Every stochastic step draws from a xoshiro256++ generator. Generators are
//! seeded through SplitMix64 (increment `0x9E3779B97F4A7C15`, mixing multipliers
//! `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`), and child streams are
//! derived from a parent seed plus a path of integer labels, so any batch or
//! frame can be regenerated without replaying the streams before it.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a sequence of labels into a parent seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn derived(seed: u64, path: &[u64]) -> Rng {
    seeded(derive_seed(seed, path))
}
