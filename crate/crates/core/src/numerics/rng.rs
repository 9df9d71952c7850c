//! Seed derivation and the random generator used everywhere in the crate.
//!
//! The generator is ChaCha8 (`rand_chacha::ChaCha8Rng`), a counter-based
//! stream cipher. Its 256-bit key comes from a [`Seed`]: a 64-bit value that can
//! be split into independent child seeds by mixing in integer labels.
//!
//! Mixing uses the SplitMix64 finalizer:
//!
//! ```text
//! child = mix(parent ^ mix(label + 0x9E3779B97F4A7C15))
//! key   = mix(s + 1·φ) ‖ mix(s + 2·φ) ‖ mix(s + 3·φ) ‖ mix(s + 4·φ)   (little-endian words)
//! ```
//!
//! where `φ = 0x9E3779B97F4A7C15`. Child streams therefore depend only on the
//! parent seed and the label path, never on how many values a sibling drew.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Seed(pub u64);

impl Seed {
    pub fn split(self, label: u64) -> Seed {
        Seed(mix(self.0 ^ mix(label.wrapping_add(GOLDEN))))
    }

    pub fn derive(self, path: &[u64]) -> Seed {
        path.iter().fold(self, |s, &l| s.split(l))
    }

    pub fn rng(self) -> Rng {
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
            let word = mix(self.0.wrapping_add(GOLDEN.wrapping_mul(i as u64 + 1)));
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

/// Labels for the independent streams used across the crate.
pub mod stream {
    pub const DATASET: u64 = 1;
    pub const SCENE_LAYOUT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const DROPOUT: u64 = 5;
    pub const AUGMENT: u64 = 6;
}
