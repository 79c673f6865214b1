//! Deterministic seed derivation.
//!
//! Every random stream in a run is derived from one master seed by mixing in
//! a domain tag and an index with the SplitMix64 finalizer:
//!
//! ```text
//! seed(domain, index) = mix(mix(master ^ domain) ^ index)
//! ```
//!
//! Domains are fixed constants below, so adding a new consumer never shifts
//! the streams of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub const DOMAIN_SYNTH: u64 = 0x5359_4e54_4800_0001;
pub const DOMAIN_VEHICLE: u64 = 0x5645_4849_4300_0002;
pub const DOMAIN_LAA: u64 = 0x4c41_4100_0000_0003;
pub const DOMAIN_MONTE_CARLO: u64 = 0x4d43_0000_0000_0004;
pub const DOMAIN_PREFERENCE: u64 = 0x5052_4546_0000_0005;
pub const DOMAIN_RESERVOIR: u64 = 0x5245_5356_0000_0006;
pub const DOMAIN_REPETITION: u64 = 0x5245_5045_0000_0007;
pub const DOMAIN_BEACON_NOISE: u64 = 0x4e4f_4953_4500_0008;

/// SplitMix64 output function. A bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, domain: u64, index: u64) -> u64 {
    mix64(mix64(master ^ domain) ^ index)
}

pub fn stream(master: u64, domain: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, domain, index))
}
