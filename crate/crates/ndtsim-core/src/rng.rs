//! Seed derivation for decoupled deterministic random streams.
//!
//! Every stochastic step in a run (per-NDT shuffles, fake placement,
//! attack noise) draws from its own stream keyed by role and indices,
//! so adding parallelism or reordering steps never changes results.

/// SplitMix64 finalizer; bijective on u64.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a root seed and a stream tag.
pub fn derive(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ tag.wrapping_mul(0xA24B_AED4_963E_E407))
}

/// Derives a child seed from a root seed and two stream tags.
pub fn derive2(seed: u64, tag_a: u64, tag_b: u64) -> u64 {
    derive(derive(seed, tag_a), tag_b)
}

/// Derives a child seed from a root seed and three stream tags.
pub fn derive3(seed: u64, tag_a: u64, tag_b: u64, tag_c: u64) -> u64 {
    derive(derive2(seed, tag_a, tag_b), tag_c)
}

/// Stream tags for the orchestrator's independent random streams.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const LOCAL: u64 = 2;
    pub const ATTACK: u64 = 3;
    pub const PLACEMENT: u64 = 4;
    pub const ROOT_DATA: u64 = 5;
    pub const SCHEDULE: u64 = 6;
    pub const ATTRS: u64 = 7;
    pub const DATA: u64 = 8;
}
