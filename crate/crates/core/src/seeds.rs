//! Derivation of independent RNG seeds from one master seed.
//!
//! Stream `k` of master seed `m` is the SplitMix64 output for the state
//! `m + (k + 1) * 0x9E3779B97F4A7C15`. Named stages use the 64-bit FNV-1a
//! hash of their name as the stream number.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn split_seed(master: u64, stream: u64) -> u64 {
    mix(master.wrapping_add(stream.wrapping_add(1).wrapping_mul(GOLDEN)))
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn stage_seed(master: u64, stage: &str) -> u64 {
    split_seed(master, fnv1a(stage))
}
