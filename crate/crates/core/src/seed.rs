//! Counter-based seed derivation so that every random stream (replicate,
//! CV fold assignment, Monte-Carlo draw) is a pure function of the master
//! seed and its position, independent of scheduling.

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sub-stream `stream` of `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    mix64(mix64(master) ^ mix64(stream.wrapping_add(0xD1B5_4A32_D192_ED03)))
}
