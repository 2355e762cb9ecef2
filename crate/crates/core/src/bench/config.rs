use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::ClassifierSpec;
use crate::error::{param, Error, Result};
use crate::sketches::{Mode, DEFAULT_BITS_PER_ITEM, DEFAULT_HASHES};
use crate::solvers::Init;
use crate::synthgen::{DayColumn, LogFormat, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Cms,
    Lcms,
    Opthash,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Cms => "cms",
            Estimator::Lcms => "lcms",
            Estimator::Opthash => "opthash",
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cms" | "count-min" => Ok(Estimator::Cms),
            "lcms" | "heavy-hitter" => Ok(Estimator::Lcms),
            "opthash" | "opt-hash" => Ok(Estimator::Opthash),
            _ => Err(param(format!("unknown estimator {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Bcd,
    Dp,
}

/// Where the stream comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    /// Grouped Gaussian universe; the prefix draws only from each group's
    /// eligible subset, the rest of the stream from the whole universe.
    Synthetic(SynthConfig),
    /// Query log; the first day is the prefix and each later day a checkpoint.
    QueryLog { path: PathBuf, format: LogFormat, max_days: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: Source,
    pub estimators: Vec<Estimator>,
    pub budgets_kb: Vec<f64>,
    pub seed: u64,
    pub repetitions: usize,
    pub lambda: f64,
    pub ratio_c: f64,
    pub mode: Mode,
    /// Synthetic streams have `stream_factor · |prefix|` arrivals in total.
    pub stream_factor: usize,
    /// Equal-length checkpoints after the prefix (synthetic sources).
    pub checkpoints: usize,
    pub solver: SolverKind,
    pub init: Init,
    pub restarts: usize,
    pub max_iters: usize,
    pub classifier: ClassifierSpec,
    pub holdout_fraction: f64,
    pub vocabulary: usize,
    pub cms_depths: Vec<usize>,
    pub heavy_buckets: Vec<usize>,
    pub bloom_bits_per_item: usize,
    pub bloom_hashes: usize,
    /// Bloom capacity as a multiple of the number of distinct prefix ids.
    pub bloom_capacity_factor: f64,
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: Source::Synthetic(SynthConfig { groups: 10, eligible_fraction: 0.5, ..SynthConfig::default() }),
            estimators: vec![Estimator::Cms, Estimator::Lcms, Estimator::Opthash],
            budgets_kb: vec![4.0, 12.0, 40.0],
            seed: 0,
            repetitions: 5,
            lambda: 0.5,
            ratio_c: 0.3,
            mode: Mode::Static,
            stream_factor: 10,
            checkpoints: 9,
            solver: SolverKind::Bcd,
            init: Init::DpWarmStart,
            restarts: 1,
            max_iters: 100,
            classifier: ClassifierSpec::TunedTree,
            holdout_fraction: 0.2,
            vocabulary: crate::classify::DEFAULT_VOCABULARY,
            cms_depths: vec![1, 2, 4, 6],
            heavy_buckets: vec![10, 100, 1000, 10000],
            bloom_bits_per_item: DEFAULT_BITS_PER_ITEM,
            bloom_hashes: DEFAULT_HASHES,
            bloom_capacity_factor: 2.0,
            record_timing: false,
        }
    }
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| param(format!("{key}: bad value {s:?}: {e}"))))
        .collect()
}

fn one<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| param(format!("{key}: bad value {value:?}: {e}")))
}

impl ExperimentConfig {
    fn synth_mut(&mut self) -> &mut SynthConfig {
        if !matches!(self.source, Source::Synthetic(_)) {
            self.source = Source::Synthetic(SynthConfig::default());
        }
        match &mut self.source {
            Source::Synthetic(s) => s,
            Source::QueryLog { .. } => unreachable!(),
        }
    }

    fn log_mut(&mut self) -> Result<(&mut LogFormat, &mut Option<usize>)> {
        match &mut self.source {
            Source::QueryLog { format, max_days, .. } => Ok((format, max_days)),
            Source::Synthetic(_) => Err(param("set log_path before other log options")),
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim().replace('-', "_").as_str() {
            "estimators" | "estimator" => self.estimators = list(key, v)?,
            "budgets_kb" | "buckets_kb" | "memory_kb" => self.budgets_kb = list(key, v)?,
            "seed" => self.seed = one(key, v)?,
            "repetitions" => self.repetitions = one(key, v)?,
            "lambda" => self.lambda = one(key, v)?,
            "ratio_c" => self.ratio_c = one(key, v)?,
            "mode" => self.mode = one(key, v)?,
            "stream_factor" => self.stream_factor = one(key, v)?,
            "checkpoints" => self.checkpoints = one(key, v)?,
            "solver" => {
                self.solver = match v {
                    "bcd" => SolverKind::Bcd,
                    "dp" => SolverKind::Dp,
                    _ => return Err(param(format!("unknown solver {v:?}"))),
                }
            }
            "init" => self.init = one(key, v)?,
            "restarts" => self.restarts = one(key, v)?,
            "max_iters" => self.max_iters = one(key, v)?,
            "classifier" => self.classifier = one(key, v)?,
            "holdout_fraction" => self.holdout_fraction = one(key, v)?,
            "vocabulary" => self.vocabulary = one(key, v)?,
            "cms_depths" => self.cms_depths = list(key, v)?,
            "heavy_buckets" => self.heavy_buckets = list(key, v)?,
            "bloom_bits_per_item" => self.bloom_bits_per_item = one(key, v)?,
            "bloom_hashes" => self.bloom_hashes = one(key, v)?,
            "bloom_capacity_factor" => self.bloom_capacity_factor = one(key, v)?,
            "record_timing" => self.record_timing = one(key, v)?,
            "groups" => self.synth_mut().groups = one(key, v)?,
            "size_offset" => self.synth_mut().size_offset = one(key, v)?,
            "dim" => self.synth_mut().dim = one(key, v)?,
            "eligible_fraction" => self.synth_mut().eligible_fraction = one(key, v)?,
            "prefix_len" => self.synth_mut().prefix_len = Some(one(key, v)?),
            "log_path" => {
                self.source = Source::QueryLog { path: PathBuf::from(v), format: LogFormat::default(), max_days: None };
            }
            "log_format" => {
                let (f, _) = self.log_mut()?;
                *f = match v {
                    "aol" => LogFormat::aol(),
                    "csv" => LogFormat::default(),
                    _ => return Err(param(format!("unknown log format {v:?}"))),
                }
            }
            "query_column" => self.log_mut()?.0.query_column = v.to_owned(),
            "day_column" => self.log_mut()?.0.day_column = v.to_owned(),
            "day_kind" => {
                self.log_mut()?.0.day = match v {
                    "index" => DayColumn::Index,
                    "timestamp" => DayColumn::Timestamp,
                    _ => return Err(param(format!("unknown day kind {v:?}"))),
                }
            }
            "max_days" => *self.log_mut()?.1 = Some(one(key, v)?),
            other => return Err(param(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_kv(text)?;
        Ok(cfg)
    }

    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| param(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            self.set(k, v).map_err(|e| param(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.estimators.is_empty() || self.budgets_kb.is_empty() {
            return Err(param("need at least one estimator and one budget"));
        }
        if self.budgets_kb.iter().any(|&kb| !(kb > 0.0)) {
            return Err(param("budgets must be positive"));
        }
        if self.repetitions == 0 || self.checkpoints == 0 || self.stream_factor < 2 {
            return Err(param("repetitions and checkpoints must be positive and stream_factor at least 2"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(param(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.ratio_c > 0.0) {
            return Err(param("ratio_c must be positive"));
        }
        if self.cms_depths.is_empty() || self.cms_depths.contains(&0) {
            return Err(param("cms depths must be positive"));
        }
        Ok(())
    }

    /// Short stable digest of the full configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
