//! Deterministic derivation of per-trial seeds from one base seed.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sub-stream `stream` of `base`:
/// `mix64(base + (stream + 1) * 0x9E3779B97F4A7C15)` (wrapping arithmetic).
///
/// Pure and documented so any single trial can be re-run in isolation.
/// Trial k of an experiment uses stream `2k` for intention sampling and
/// stream `2k + 1` for the episode's policy randomness.
pub fn trial_seed(base: u64, stream: u64) -> u64 {
    mix64(base.wrapping_add(stream.wrapping_add(1).wrapping_mul(GAMMA)))
}
