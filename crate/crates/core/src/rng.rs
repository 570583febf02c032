//! Seed derivation for reproducible ensembles.
//!
//! Every Monte Carlo trial gets its own [`ChaCha8Rng`](rand_chacha::ChaCha8Rng)
//! seeded from `trial_seed(base_seed, index)`. Deriving per-trial seeds —
//! rather than drawing all trials from one shared stream — makes each
//! trajectory a pure function of `(base_seed, index)`, so results cannot
//! depend on scheduling, chunking, or thread count.

/// Derives the seed for one trial from the ensemble's base seed.
///
/// This is the `index`-th output of the SplitMix64 generator seeded with
/// `base_seed`: the state advances by the Weyl constant `0x9E3779B97F4A7C15`
/// per step and is scrambled by the standard two-round multiply-xor
/// finalizer (`0xBF58476D1CE4E5B9`, `0x94D049BB133111EB`). Distinct
/// indices therefore yield statistically independent, collision-free
/// seeds for any base.
pub fn trial_seed(base_seed: u64, index: u64) -> u64 {
    let state = base_seed.wrapping_add(0x9E37_79B9_7F4A_7C15_u64.wrapping_mul(index.wrapping_add(1)));
    splitmix64(state)
}

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
