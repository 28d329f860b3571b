//! Seed derivation.
//!
//! Every random draw in the crate comes from a [`RandomSource`] obtained from a
//! [`SeedTree`] node. A node is identified by the root seed and the path of
//! labels leading to it, e.g. `root / REPETITION v / SUBSAMPLE (k, b)`, so the
//! stream a job uses depends only on its coordinates and never on the order in
//! which jobs are executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RandomSource = ChaCha8Rng;

pub const DATA: u64 = 1;
pub const PARTITIONS: u64 = 2;
pub const SUBSAMPLES: u64 = 3;
pub const REPETITION: u64 = 4;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedTree {
    state: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { state: splitmix64(root) }
    }

    pub fn child(self, label: u64) -> Self {
        Self {
            state: splitmix64(self.state ^ splitmix64(label.wrapping_mul(0xD6E8_FEB8_6659_FD93))),
        }
    }

    pub fn path(self, labels: &[u64]) -> Self {
        labels.iter().fold(self, |node, &l| node.child(l))
    }

    pub fn rng(self) -> RandomSource {
        ChaCha8Rng::seed_from_u64(self.state)
    }
}
