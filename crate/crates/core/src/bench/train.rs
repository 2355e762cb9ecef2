use serde::{Deserialize, Serialize};

use super::budget::{check_budget, split_budget, weighted_sample};
use super::config::{ExperimentConfig, SolverKind};
use crate::classify::{train_bucket_classifier, ClassifierSpec};
use crate::error::{param, Result};
use crate::objective::{evaluate, ObjectiveValue};
use crate::rng::child_seed;
use crate::scheme::HashScheme;
use crate::sketches::{BloomParams, Mode, OptHashSketch, BITS_PER_BUCKET};
use crate::solvers::{bcd_optimize, dp_optimize, BcdConfig, Init};
use crate::stream::StreamPrefix;

/// Everything needed to turn a prefix and a bucket budget into a sketch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub lambda: f64,
    pub ratio_c: f64,
    pub mode: Mode,
    pub solver: SolverKind,
    pub init: Init,
    pub restarts: usize,
    pub max_iters: usize,
    pub classifier: ClassifierSpec,
    pub holdout_fraction: f64,
    pub bloom_bits_per_item: usize,
    pub bloom_hashes: usize,
    pub bloom_capacity_factor: f64,
}

impl From<&ExperimentConfig> for TrainParams {
    fn from(c: &ExperimentConfig) -> Self {
        TrainParams {
            lambda: c.lambda,
            ratio_c: c.ratio_c,
            mode: c.mode,
            solver: c.solver,
            init: c.init,
            restarts: c.restarts,
            max_iters: c.max_iters,
            classifier: c.classifier.clone(),
            holdout_fraction: c.holdout_fraction,
            bloom_bits_per_item: c.bloom_bits_per_item,
            bloom_hashes: c.bloom_hashes,
            bloom_capacity_factor: c.bloom_capacity_factor,
        }
    }
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams::from(&ExperimentConfig::default())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedOptHash {
    pub sketch: OptHashSketch,
    pub scheme: HashScheme,
    /// Objective of the learned scheme on the sampled prefix.
    pub objective: ObjectiveValue,
    /// Prefix ids the scheme was learned on.
    pub sampled: Vec<u64>,
    pub holdout_accuracy: Option<f64>,
}

/// Learns a scheme and classifier for `b_total` buckets and builds the sketch.
///
/// In adaptive mode the Bloom filter is paid for first, sized for
/// `bloom_capacity_factor` times the distinct prefix ids but never more than
/// half the budget. The rest is split between stored ids and buckets by
/// `ratio_c`; if the prefix has fewer distinct ids than may be stored, the
/// unused id slots become buckets. Ids are subsampled in proportion to their
/// prefix frequency.
pub fn train_opthash(prefix: &StreamPrefix, b_total: usize, p: &TrainParams, seed: u64) -> Result<TrainedOptHash> {
    let bloom = match p.mode {
        Mode::Static => None,
        Mode::Adaptive => {
            let want = (p.bloom_capacity_factor * prefix.n() as f64).ceil().max(1.0) as usize;
            let max_items = (b_total / 2) * BITS_PER_BUCKET / p.bloom_bits_per_item.max(1);
            Some(BloomParams {
                expected_items: want.min(max_items.max(1)),
                bits_per_item: p.bloom_bits_per_item,
                hashes: p.bloom_hashes,
                seed: child_seed(seed, 3),
            })
        }
    };
    let bloom_charge = bloom.map_or(0, |b| (b.expected_items * b.bits_per_item).div_ceil(BITS_PER_BUCKET));
    let remaining = b_total.saturating_sub(bloom_charge);
    let (n_ids, _) = split_budget(remaining, p.ratio_c)?;
    if n_ids == 0 || n_ids >= remaining {
        return Err(param(format!("{b_total} buckets leave no room for both ids and buckets")));
    }

    let sampled: Vec<u64> = if prefix.n() <= n_ids {
        prefix.elements().iter().map(|e| e.id).collect()
    } else {
        weighted_sample(&prefix.freqs_f64(), n_ids, child_seed(seed, 1))
            .into_iter()
            .map(|i| prefix.elements()[i].id)
            .collect()
    };
    let train = if sampled.len() == prefix.n() { prefix.clone() } else { prefix.restrict(&sampled)? };
    let b = remaining - train.n();

    let scheme = match p.solver {
        SolverKind::Dp => dp_optimize(&train, b)?,
        SolverKind::Bcd => {
            let cfg = BcdConfig {
                lambda: p.lambda,
                max_iters: p.max_iters,
                tol: None,
                restarts: p.restarts,
                init: p.init,
                seed: child_seed(seed, 2),
            };
            bcd_optimize(&train, b, &cfg)?.scheme
        }
    };
    let objective = evaluate(&scheme, &train, p.lambda)?;
    let trained = train_bucket_classifier(&train, &scheme, &p.classifier, p.holdout_fraction, child_seed(seed, 4))?;
    let sketch = OptHashSketch::build(&scheme, &train, trained.model, p.mode, bloom)?;
    check_budget("opthash", sketch.memory_buckets(), b_total)?;
    Ok(TrainedOptHash { sketch, scheme, objective, sampled, holdout_accuracy: trained.holdout_accuracy })
}
