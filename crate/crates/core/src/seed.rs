//! Seed derivation for independent, reproducible random streams.

/// Name recorded in generated output so runs can be reproduced.
pub const GENERATOR_NAME: &str = "chacha8/splitmix64";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for stream `index` under `base`; streams are reproducible
/// independently of each other.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base) ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}
