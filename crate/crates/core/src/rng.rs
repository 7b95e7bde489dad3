//! Counter-based random streams.
//!
//! Every random decision in the engine draws from a ChaCha8 stream addressed by
//! `(seed, domain, index, draw)`. The 256-bit ChaCha key is expanded with
//! SplitMix64 from `(seed, domain, index)` and `draw` selects the ChaCha stream
//! word, so any draw can be regenerated without replaying the ones before it.
//! Results therefore never depend on evaluation order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent families of random draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    /// Augmentations of the un-occluded reference image.
    Reference = 0x5245_4600,
    /// Augmentations of an occluded image; `index` is the mask index.
    Occluded = 0x4f43_4300,
    /// Mask anchor sampling.
    Anchors = 0x414e_4300,
    /// Anything owned by a caller outside the engine (toy models, controls).
    External = 0x4558_5400,
}

/// Address of one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub domain: Domain,
    pub index: u64,
    pub draw: u64,
}

impl StreamKey {
    pub fn new(seed: u64, domain: Domain, index: u64, draw: u64) -> Self {
        Self {
            seed,
            domain,
            index,
            draw,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = self.seed ^ splitmix64(&mut (self.domain as u64 ^ self.index.rotate_left(32)));
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.draw);
        rng
    }
}

/// Convenience for a stream outside the engine's own domains.
pub fn external_rng(seed: u64, index: u64) -> ChaCha8Rng {
    StreamKey::new(seed, Domain::External, index, 0).rng()
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
