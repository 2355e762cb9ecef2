use serde::{Deserialize, Serialize};

use super::hashing::{hash_family, HashFn};
use crate::error::{param, Result};

/// Count-Min sketch with `depth` rows of `width` counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountMinSketch {
    width: usize,
    depth: usize,
    seed: u64,
    hashes: Vec<HashFn>,
    counters: Vec<u64>,
}

impl CountMinSketch {
    pub fn new(width: usize, depth: usize, seed: u64) -> Result<Self> {
        if width == 0 || depth == 0 {
            return Err(param("count-min width and depth must be positive"));
        }
        Ok(CountMinSketch { width, depth, seed, hashes: hash_family(seed, depth), counters: vec![0; width * depth] })
    }

    /// Largest sketch of the given depth using at most `buckets` counters.
    pub fn with_budget(buckets: usize, depth: usize, seed: u64) -> Result<Self> {
        if depth == 0 || buckets < depth {
            return Err(param(format!("{buckets} buckets cannot hold {depth} rows")));
        }
        Self::new(buckets / depth, depth, seed)
    }

    /// Sketch sized for additive error `epsilon·‖f‖₁` with failure probability `delta`.
    pub fn with_error(epsilon: f64, delta: f64, seed: u64) -> Result<Self> {
        if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) {
            return Err(param("need epsilon > 0 and 0 < delta < 1"));
        }
        let width = (std::f64::consts::E / epsilon).ceil() as usize;
        let depth = (1.0 / delta).ln().ceil().max(1.0) as usize;
        Self::new(width, depth, seed)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn memory_buckets(&self) -> usize {
        self.width * self.depth
    }

    pub fn update(&mut self, id: u64) {
        self.update_by(id, 1);
    }

    pub fn update_by(&mut self, id: u64, delta: u64) {
        for (l, h) in self.hashes.iter().enumerate() {
            let c = &mut self.counters[l * self.width + h.bucket(id, self.width)];
            *c = c.saturating_add(delta);
        }
    }

    pub fn query(&self, id: u64) -> u64 {
        self.hashes
            .iter()
            .enumerate()
            .map(|(l, h)| self.counters[l * self.width + h.bucket(id, self.width)])
            .min()
            .expect("depth is positive")
    }

    pub fn total(&self) -> u64 {
        self.counters[..self.width].iter().sum()
    }
}
