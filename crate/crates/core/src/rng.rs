//! Counter-keyed random streams.
//!
//! Every random quantity in the simulator is drawn from a ChaCha stream whose
//! seed is a hash of the experiment seed and a tuple of integer tags, so a draw
//! depends only on its key and never on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub const TAG_LAYOUT: u64 = 0x6c61_796f_7574;
pub const TAG_LINKS: u64 = 0x6c_696e_6b73;
pub const TAG_FADING: u64 = 0x6661_6469_6e67;
pub const TAG_POLICY: u64 = 0x706f_6c69_6379;
pub const TAG_INIT: u64 = 0x696e_6974;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_key(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(mix64(seed), |acc, &t| mix64(acc ^ mix64(t)))
}

pub fn keyed_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, tags))
}

/// A cheaper keyed stream for short, very frequent draws (fading innovations).
pub fn keyed_fast_rng(seed: u64, tags: &[u64]) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(stream_key(seed, tags))
}

/// Order-sensitive running digest over `f64` bit patterns (FNV-1a style).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Digest(u64);

impl Default for Digest {
    fn default() -> Self {
        Digest(0xcbf2_9ce4_8422_2325)
    }
}

impl Digest {
    #[inline]
    pub fn push_f64(&mut self, x: f64) {
        self.0 = (self.0 ^ x.to_bits()).wrapping_mul(0x0000_0100_0000_01b3);
    }

    pub fn value(&self) -> u64 {
        self.0
    }
}
