//! Seeded, counter-based random substreams.
//!
//! Every random draw in the crate comes from a generator keyed by
//! `(seed, tag, index)`, so per-pixel or per-run work can be scheduled in any
//! order (or in parallel) and still reproduce bit-identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags. Distinct tags give statistically independent streams.
pub mod tag {
    pub const NOISE: u64 = 0x6e6f_6973_6500_0001;
    pub const DIRICHLET: u64 = 0x6469_7269_6300_0002;
    pub const GRF: u64 = 0x6772_6600_0000_0003;
    pub const PURE: u64 = 0x7075_7265_0000_0004;
    pub const VARIANTS: u64 = 0x7661_7200_0000_0005;
    pub const DRAW: u64 = 0x6472_6177_0000_0006;
    pub const VCA: u64 = 0x7663_6100_0000_0007;
    pub const SUBSET: u64 = 0x7375_6273_0000_0008;
    pub const KMEANS: u64 = 0x6b6d_0000_0000_0009;
    pub const ABUNDANCE: u64 = 0x6162_756e_0000_000a;
    pub const RUN: u64 = 0x7275_6e00_0000_000b;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a tag into a new 64-bit seed.
pub fn derive(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

/// Generator for item `index` of stream `tag` under `seed`.
pub fn substream(seed: u64, tag: u64, index: u64) -> Rng {
    let mut key = [0u8; 32];
    let mut state = derive(seed, tag) ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d));
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    Rng::from_seed(key)
}
