//! Reproducible random streams.
//!
//! Every random draw in the toolkit comes from a ChaCha8 generator keyed by
//! `(master seed, domain)` and positioned on a stream equal to the item
//! index (signal, trial, epoch). ChaCha is counter based, so each child
//! stream is independent of how many values other streams consumed, and
//! parallel evaluation yields the same numbers as a serial run.
//!
//! Keys are expanded from the 64-bit seed and domain tag with SplitMix64;
//! domain tags are FNV-1a hashes of short labels such as `"clutter"`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator for item `index` within `domain`.
    pub fn child(&self, domain: u64, index: u64) -> StreamRng {
        let mut state = self.seed ^ domain.rotate_left(17);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }

    /// Derived stream family, e.g. one per Monte-Carlo grid point.
    pub fn fork(&self, domain: u64, index: u64) -> Streams {
        let mut state = self.seed ^ domain.rotate_left(29) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        Streams::new(splitmix64(&mut state))
    }
}

/// Stable 64-bit tag for a label.
pub const fn domain(label: &str) -> u64 {
    let bytes = label.as_bytes();
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut i = 0;
    while i < bytes.len() {
        hash ^= bytes[i] as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        i += 1;
    }
    hash
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
