use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::cms::CountMinSketch;
use super::persist::sorted_pairs;
use crate::error::{param, Result};

/// Count-Min with exact counters for a known heavy-hitter set. Each exact
/// counter is charged as two buckets since it also stores its id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedCms {
    b_total: usize,
    b_heavy: usize,
    #[serde(with = "sorted_pairs")]
    heavy: HashMap<u64, u64>,
    backing: Option<CountMinSketch>,
}

impl LearnedCms {
    /// `heavy_ids` is the oracle's ranking; the first `b_heavy` distinct ids are kept.
    pub fn new(heavy_ids: &[u64], b_total: usize, b_heavy: usize, depth: usize, seed: u64) -> Result<Self> {
        if 2 * b_heavy > b_total {
            return Err(param(format!("{b_heavy} heavy buckets exceed half of {b_total}")));
        }
        let mut heavy = HashMap::with_capacity(b_heavy);
        for &id in heavy_ids {
            if heavy.len() == b_heavy {
                break;
            }
            heavy.entry(id).or_insert(0);
        }
        let b_random = b_total - 2 * b_heavy;
        let backing = if b_random == 0 { None } else { Some(CountMinSketch::with_budget(b_random, depth, seed)?) };
        Ok(LearnedCms { b_total, b_heavy, heavy, backing })
    }

    pub fn b_heavy(&self) -> usize {
        self.b_heavy
    }

    pub fn backing(&self) -> Option<&CountMinSketch> {
        self.backing.as_ref()
    }

    pub fn is_heavy(&self, id: u64) -> bool {
        self.heavy.contains_key(&id)
    }

    pub fn memory_buckets(&self) -> usize {
        2 * self.b_heavy + self.backing.as_ref().map_or(0, CountMinSketch::memory_buckets)
    }

    pub fn update(&mut self, id: u64) {
        self.update_by(id, 1);
    }

    pub fn update_by(&mut self, id: u64, delta: u64) {
        if let Some(c) = self.heavy.get_mut(&id) {
            *c += delta;
        } else if let Some(s) = &mut self.backing {
            s.update_by(id, delta);
        }
    }

    pub fn query(&self, id: u64) -> u64 {
        match self.heavy.get(&id) {
            Some(&c) => c,
            None => self.backing.as_ref().map_or(0, |s| s.query(id)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heavy_ids_are_exact() {
        let ids = [5u64, 6, 7];
        let mut s = LearnedCms::new(&ids, 12, 3, 2, 0).unwrap();
        for (k, &id) in ids.iter().enumerate() {
            for _ in 0..=k {
                s.update(id);
            }
        }
        assert_eq!(ids.map(|i| s.query(i)), [1, 2, 3]);
        assert_eq!(s.memory_buckets(), 12);
    }

    #[test]
    fn no_heavy_matches_plain_cms() {
        let mut l = LearnedCms::new(&[], 300, 0, 3, 17).unwrap();
        let mut c = CountMinSketch::with_budget(300, 3, 17).unwrap();
        for i in 0..5_000u64 {
            let id = (i * i) % 997;
            l.update(id);
            c.update(id);
        }
        for id in 0..1_000 {
            assert_eq!(l.query(id), c.query(id));
        }
    }

    #[test]
    fn too_many_heavy_rejected() {
        assert!(LearnedCms::new(&[1, 2], 3, 2, 1, 0).is_err());
        let full = LearnedCms::new(&[1, 2], 4, 2, 1, 0).unwrap();
        assert_eq!(full.query(99), 0);
    }
}
