//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit stream. Streams for
//! independent work items are derived from a base seed and a key path, so
//! the outcome of one item never depends on scheduling or on the order in
//! which other items were processed.

use rand::SeedableRng;

/// The stream type used throughout the simulator.
pub type SimRng = rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with an ordered key path into a new 64-bit seed.
pub fn derive_seed(base: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(base), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Stream for `keys` under `base`.
pub fn stream(base: u64, keys: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(base, keys))
}

/// Stable key for a floating-point condition value (voltage, suns, ...).
pub fn float_key(v: f64) -> u64 {
    // -0.0 and 0.0 must map to the same key
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

/// Stable key for a short label.
pub fn label_key(label: &str) -> u64 {
    label
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}
