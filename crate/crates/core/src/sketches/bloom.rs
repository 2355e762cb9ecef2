use serde::{Deserialize, Serialize};

use super::hashing::{hash_family, HashFn};
use crate::error::{param, Result};
use crate::rng::mix64;

pub const DEFAULT_BITS_PER_ITEM: usize = 10;
pub const DEFAULT_HASHES: usize = 7;
/// Bits that cost one bucket of memory.
pub const BITS_PER_BUCKET: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BloomFilter {
    m: usize,
    k: usize,
    hashes: Vec<HashFn>,
    bits: Vec<u64>,
    inserted: u64,
}

impl BloomFilter {
    pub fn new(m: usize, k: usize, seed: u64) -> Result<Self> {
        if m == 0 || k == 0 {
            return Err(param("bloom filter needs at least one bit and one hash"));
        }
        Ok(BloomFilter { m, k, hashes: hash_family(seed, k), bits: vec![0; m.div_ceil(64)], inserted: 0 })
    }

    /// `bits_per_item · expected` bits and `k` hashes.
    pub fn for_capacity(expected: usize, bits_per_item: usize, k: usize, seed: u64) -> Result<Self> {
        Self::new((expected * bits_per_item).max(1), k, seed)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn insert(&mut self, id: u64) {
        // Keys are scrambled first: consecutive ids through a linear hash
        // land on a lattice and inflate the false-positive rate.
        let id = mix64(id);
        for h in &self.hashes {
            let bit = h.bucket(id, self.m);
            self.bits[bit / 64] |= 1 << (bit % 64);
        }
        self.inserted += 1;
    }

    pub fn contains(&self, id: u64) -> bool {
        let id = mix64(id);
        self.hashes.iter().all(|h| {
            let bit = h.bucket(id, self.m);
            self.bits[bit / 64] >> (bit % 64) & 1 == 1
        })
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Textbook false-positive rate after `n` insertions.
    pub fn expected_fpr(&self, n: u64) -> f64 {
        (1.0 - (-(self.k as f64) * n as f64 / self.m as f64).exp()).powi(self.k as i32)
    }

    pub fn memory_buckets(&self) -> usize {
        self.m.div_ceil(BITS_PER_BUCKET)
    }
}
