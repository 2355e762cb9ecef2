use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::bloom::{BloomFilter, DEFAULT_BITS_PER_ITEM, DEFAULT_HASHES};
use super::persist::sorted_pairs;
use crate::classify::{BucketModel, Classifier};
use crate::error::{param, Error, Result};
use crate::scheme::{validate_scheme, HashScheme};
use crate::stream::{Element, StreamPrefix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Bucket element counts are frozen at training time; unseen arrivals are ignored.
    Static,
    /// Unseen arrivals update their bucket, with a Bloom filter tracking which
    /// ids have already been counted.
    Adaptive,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Mode::Static),
            "adaptive" => Ok(Mode::Adaptive),
            _ => Err(param(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BloomParams {
    /// Insertions the filter is sized for.
    pub expected_items: usize,
    pub bits_per_item: usize,
    pub hashes: usize,
    pub seed: u64,
}

impl BloomParams {
    pub fn for_items(expected_items: usize, seed: u64) -> Self {
        BloomParams { expected_items, bits_per_item: DEFAULT_BITS_PER_ITEM, hashes: DEFAULT_HASHES, seed }
    }
}

/// Learned-bucket frequency sketch.
///
/// Elements stored from the prefix keep their learned bucket; every other
/// element is routed by the classifier. The estimate for an element is the
/// mean frequency `φⱼ / cⱼ` of its bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptHashSketch {
    mode: Mode,
    #[serde(with = "sorted_pairs")]
    seen_map: HashMap<u64, usize>,
    classifier: BucketModel,
    phi: Vec<u64>,
    counts: Vec<u64>,
    bloom: Option<BloomFilter>,
}

impl OptHashSketch {
    /// Initializes bucket sums and counts from the prefix. In adaptive mode the
    /// Bloom filter starts with every prefix id.
    pub fn build(
        scheme: &HashScheme,
        prefix: &StreamPrefix,
        classifier: BucketModel,
        mode: Mode,
        bloom: Option<BloomParams>,
    ) -> Result<Self> {
        if !validate_scheme(scheme, prefix) {
            return Err(Error::Mismatch("scheme does not cover the prefix".into()));
        }
        if classifier.n_classes() != scheme.b() {
            return Err(Error::Mismatch(format!(
                "classifier has {} classes but the scheme has {} buckets",
                classifier.n_classes(),
                scheme.b()
            )));
        }
        let b = scheme.b();
        let mut phi = vec![0; b];
        let mut counts = vec![0; b];
        let mut seen_map = HashMap::with_capacity(prefix.n());
        for (e, &f) in prefix.elements().iter().zip(prefix.freqs()) {
            let j = scheme.bucket_of(e.id).expect("validated");
            phi[j] += f;
            counts[j] += 1;
            seen_map.insert(e.id, j);
        }
        let bloom = match mode {
            Mode::Static => None,
            Mode::Adaptive => {
                let p = bloom.unwrap_or_else(|| BloomParams::for_items(prefix.n(), 0));
                let mut bf = BloomFilter::for_capacity(p.expected_items, p.bits_per_item, p.hashes, p.seed)?;
                for e in prefix.elements() {
                    bf.insert(e.id);
                }
                Some(bf)
            }
        };
        Ok(OptHashSketch { mode, seen_map, classifier, phi, counts, bloom })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn b(&self) -> usize {
        self.phi.len()
    }

    pub fn phi(&self) -> &[u64] {
        &self.phi
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn bloom(&self) -> Option<&BloomFilter> {
        self.bloom.as_ref()
    }

    pub fn classifier(&self) -> &BucketModel {
        &self.classifier
    }

    pub fn stored_ids(&self) -> usize {
        self.seen_map.len()
    }

    pub fn is_stored(&self, id: u64) -> bool {
        self.seen_map.contains_key(&id)
    }

    /// `b` buckets, one bucket per stored id, and the Bloom filter's bits.
    pub fn memory_buckets(&self) -> usize {
        self.b() + self.stored_ids() + self.bloom.as_ref().map_or(0, BloomFilter::memory_buckets)
    }

    /// Bucket the element maps to: the stored assignment if any, else the classifier's.
    pub fn route(&self, id: u64, features: &[f64]) -> Result<usize> {
        match self.seen_map.get(&id) {
            Some(&j) => Ok(j),
            None => self.classifier.predict(features),
        }
    }

    pub fn update(&mut self, element: &Element) -> Result<()> {
        self.update_with(element.id, &element.features)
    }

    pub fn update_with(&mut self, id: u64, features: &[f64]) -> Result<()> {
        if self.mode == Mode::Static && !self.is_stored(id) {
            return Ok(());
        }
        let j = self.route(id, features)?;
        self.update_routed(id, j);
        Ok(())
    }

    /// Update for an element already routed to bucket `j` by [`Self::route`].
    pub fn update_routed(&mut self, id: u64, j: usize) {
        match self.mode {
            Mode::Static => {
                if self.is_stored(id) {
                    self.phi[j] += 1;
                }
            }
            Mode::Adaptive => {
                let bf = self.bloom.as_mut().expect("adaptive sketch has a bloom filter");
                if !bf.contains(id) {
                    self.counts[j] += 1;
                    bf.insert(id);
                }
                self.phi[j] += 1;
            }
        }
    }

    pub fn query(&self, element: &Element) -> Result<f64> {
        self.query_with(element.id, &element.features)
    }

    pub fn query_with(&self, id: u64, features: &[f64]) -> Result<f64> {
        Ok(self.query_routed(id, self.route(id, features)?))
    }

    /// Estimate for an element already routed to bucket `j`.
    pub fn query_routed(&self, id: u64, j: usize) -> f64 {
        if self.bloom.as_ref().is_some_and(|bf| !bf.contains(id)) {
            return 0.0;
        }
        self.bucket_mean(j)
    }

    pub fn bucket_mean(&self, j: usize) -> f64 {
        if self.counts[j] == 0 {
            0.0
        } else {
            self.phi[j] as f64 / self.counts[j] as f64
        }
    }
}
