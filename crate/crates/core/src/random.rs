//! Seedable, splittable random streams.
//!
//! Every consumer of randomness receives a [`RandomStreams`] handle and derives
//! child handles by label (path index, particle index, purpose). A child's
//! generator depends only on the master seed and the chain of labels, so
//! results do not depend on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A node in a tree of independent random streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RandomStreams {
    key: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomStreams {
    pub fn new(master_seed: u64) -> Self {
        Self {
            key: splitmix64(master_seed ^ 0x6879_7369_6d00_0000),
        }
    }

    /// Child stream identified by `label`. Distinct labels give independent
    /// streams; the same label always gives the same stream.
    pub fn split(&self, label: u64) -> Self {
        Self {
            key: splitmix64(self.key ^ splitmix64(label.wrapping_add(0x1234_5678_9abc_def1))),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut z = self.key;
        for chunk in seed.chunks_mut(8) {
            z = splitmix64(z);
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }

    pub fn key(&self) -> u64 {
        self.key
    }
}
