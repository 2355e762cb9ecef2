use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{child_seed, seeded};

/// Multiply-add-shift hash of 64-bit keys: the high 64 bits of `a·x + b`
/// modulo 2¹²⁸, with `a` odd. The family is 2-independent on the output bits.
/// Stored as its seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "u64", into = "u64")]
pub struct HashFn {
    seed: u64,
    a: u128,
    b: u128,
}

impl From<u64> for HashFn {
    fn from(seed: u64) -> Self {
        HashFn::from_seed(seed)
    }
}

impl From<HashFn> for u64 {
    fn from(h: HashFn) -> u64 {
        h.seed
    }
}

impl HashFn {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = seeded(seed, 0);
        HashFn { seed, a: rng.gen::<u128>() | 1, b: rng.gen::<u128>() }
    }

    #[inline]
    pub fn hash64(&self, x: u64) -> u64 {
        (self.a.wrapping_mul(x as u128).wrapping_add(self.b) >> 64) as u64
    }

    /// Index in `0..m`, by scaling the 64-bit hash rather than taking a modulus.
    #[inline]
    pub fn bucket(&self, x: u64, m: usize) -> usize {
        ((self.hash64(x) as u128 * m as u128) >> 64) as usize
    }
}

/// `count` hash functions derived from one master seed.
pub fn hash_family(master: u64, count: usize) -> Vec<HashFn> {
    (0..count as u64).map(|i| HashFn::from_seed(child_seed(master, i))).collect()
}
