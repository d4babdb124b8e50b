//! Counter-based random substreams.
//!
//! Every consumer of randomness receives a [`Substream`]: a master seed plus a
//! 64-bit stream id. The id of a child is a hash of the parent's id and the
//! child's index, so the numbers drawn for trajectory `j` of gradient estimate
//! `(k, i)` never depend on the order in which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Substream {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl Substream {
    pub fn root(seed: u64) -> Self {
        Substream { seed, stream: 0 }
    }

    /// Independent child stream `index` of this one.
    pub fn child(&self, index: u64) -> Self {
        Substream {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(index.wrapping_add(0x51_7CC1_B727_220A))),
        }
    }

    /// Child along a labelled path, e.g. `&[k, i, j]`.
    pub fn descend(&self, path: &[u64]) -> Self {
        path.iter().fold(*self, |s, &i| s.child(i))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_substream_same_numbers() {
        let s = Substream::root(7).descend(&[1, 2, 3]);
        let a: Vec<u64> = s.rng().random_iter().take(8).collect();
        let b: Vec<u64> = s.rng().random_iter().take(8).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn children_differ() {
        let s = Substream::root(7);
        let a: u64 = s.child(0).rng().random();
        let b: u64 = s.child(1).rng().random();
        let c: u64 = Substream::root(8).child(0).rng().random();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(s.descend(&[1, 2]), s.descend(&[2, 1]));
    }
}
