use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::Instant;

use serde::Serialize;

use super::budget::{budget_to_buckets, check_budget, top_k};
use super::config::{Estimator, ExperimentConfig, Source};
use super::metrics::{avg_abs_error, expected_magnitude_error, mean_std};
use super::train::{train_opthash, TrainParams};
use crate::classify::{fit_pipeline, FeaturePipeline};
use crate::error::{Error, Result};
use crate::rng::child_seed;
use crate::sketches::{CountMinSketch, LearnedCms, OptHashSketch};
use crate::stream::StreamPrefix;
use crate::synthgen::{gen_stream, gen_universe, load_query_log, SynthConfig};

/// Feature vectors by id.
#[derive(Debug, Clone)]
pub enum FeatureSource {
    Table(Vec<Vec<f64>>),
    /// Computed on demand from query text.
    Text { pipeline: FeaturePipeline, queries: Vec<String> },
}

impl FeatureSource {
    pub fn get(&self, id: u64) -> Option<Cow<'_, [f64]>> {
        match self {
            FeatureSource::Table(t) => t.get(id as usize).map(|v| Cow::Borrowed(v.as_slice())),
            FeatureSource::Text { pipeline, queries } => queries.get(id as usize).map(|q| Cow::Owned(pipeline.transform(q))),
        }
    }
}

/// A prefix followed by checkpointed segments.
#[derive(Debug, Clone)]
pub struct Workload {
    pub prefix: Vec<u64>,
    pub segments: Vec<Vec<u64>>,
    pub segment_names: Vec<String>,
    pub features: FeatureSource,
}

impl Workload {
    pub fn prefix_summary(&self) -> Result<StreamPrefix> {
        let events: Vec<(u64, Vec<f64>)> = self
            .prefix
            .iter()
            .map(|&id| {
                let x = self.features.get(id).ok_or_else(|| Error::Data(format!("no features for id {id}")))?;
                Ok((id, x.into_owned()))
            })
            .collect::<Result<_>>()?;
        crate::stream::ingest_prefix(events)
    }

    pub fn all_events(&self) -> impl Iterator<Item = u64> + '_ {
        self.prefix.iter().chain(self.segments.iter().flatten()).copied()
    }
}

/// Synthetic workload for one repetition seed.
pub fn synthetic_workload(cfg: &SynthConfig, stream_factor: usize, checkpoints: usize, seed: u64) -> Result<Workload> {
    let synth = SynthConfig { seed: child_seed(seed, 0), ..cfg.clone() };
    let u = gen_universe(&synth)?;
    let len = synth.prefix_len();
    let prefix = gen_stream(&u, len, true, child_seed(seed, 1))?;
    let rest_len = len * (stream_factor - 1);
    let rest = gen_stream(&u, rest_len, false, child_seed(seed, 2))?;
    let mut segments = Vec::with_capacity(checkpoints);
    let base = rest_len / checkpoints;
    let mut start = 0;
    for t in 0..checkpoints {
        let end = if t + 1 == checkpoints { rest_len } else { start + base };
        segments.push(rest[start..end].to_vec());
        start = end;
    }
    let features = FeatureSource::Table(u.elements.into_iter().map(|e| e.features).collect());
    let segment_names = (1..=checkpoints).map(|t| t.to_string()).collect();
    Ok(Workload { prefix, segments, segment_names, features })
}

fn build_workload(cfg: &ExperimentConfig, rep_seed: u64, cached_log: &mut Option<Workload>) -> Result<Workload> {
    match &cfg.source {
        Source::Synthetic(s) => synthetic_workload(s, cfg.stream_factor, cfg.checkpoints, rep_seed),
        Source::QueryLog { path, format, max_days } => {
            if let Some(w) = cached_log {
                return Ok(w.clone());
            }
            let log = load_query_log(path, format)?;
            let mut days = log.days.into_iter();
            let (_, prefix) = days.next().ok_or_else(|| Error::Data(format!("{}: no usable rows", path.display())))?;
            let rest: Vec<(String, Vec<u64>)> = days.take(max_days.unwrap_or(usize::MAX)).collect();
            if rest.is_empty() {
                return Err(Error::Data(format!("{}: need at least two days", path.display())));
            }
            let seen: HashSet<u64> = prefix.iter().copied().collect();
            let mut train: Vec<&str> = seen.iter().map(|&id| log.queries[id as usize].as_str()).collect();
            train.sort_unstable();
            let pipeline = fit_pipeline(train, cfg.vocabulary)?;
            let (segment_names, segments) = rest.into_iter().unzip();
            let w = Workload { prefix, segments, segment_names, features: FeatureSource::Text { pipeline, queries: log.queries } };
            *cached_log = Some(w.clone());
            Ok(w)
        }
    }
}

/// Ids to score at each checkpoint with their cumulative true counts.
struct Checkpoint {
    ids: Vec<u64>,
    truth: Vec<f64>,
    seen: Vec<bool>,
}

fn checkpoints(w: &Workload) -> Vec<Checkpoint> {
    let prefix: HashSet<u64> = w.prefix.iter().copied().collect();
    let mut counts: HashMap<u64, u64> = HashMap::new();
    for &id in &w.prefix {
        *counts.entry(id).or_default() += 1;
    }
    w.segments
        .iter()
        .map(|seg| {
            for &id in seg {
                *counts.entry(id).or_default() += 1;
            }
            let mut ids: Vec<u64> = seg.iter().copied().collect::<HashSet<_>>().into_iter().collect();
            ids.sort_unstable();
            let truth = ids.iter().map(|id| counts[id] as f64).collect();
            let seen = ids.iter().map(|id| prefix.contains(id)).collect();
            Checkpoint { ids, truth, seen }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
struct Scores {
    avg_abs: f64,
    exp_mag: f64,
    avg_abs_seen: Option<f64>,
    avg_abs_unseen: Option<f64>,
    exp_mag_seen: Option<f64>,
    exp_mag_unseen: Option<f64>,
}

fn score(cp: &Checkpoint, est: &[f64]) -> Result<Scores> {
    let part = |want: bool| -> Result<(Option<f64>, Option<f64>)> {
        let (t, e): (Vec<f64>, Vec<f64>) =
            cp.truth.iter().zip(est).zip(&cp.seen).filter(|(_, &s)| s == want).map(|((&t, &e), _)| (t, e)).unzip();
        if t.is_empty() {
            return Ok((None, None));
        }
        Ok((Some(avg_abs_error(&t, &e)?), Some(expected_magnitude_error(&t, &e)?)))
    };
    let (avg_abs_seen, exp_mag_seen) = part(true)?;
    let (avg_abs_unseen, exp_mag_unseen) = part(false)?;
    Ok(Scores {
        avg_abs: avg_abs_error(&cp.truth, est)?,
        exp_mag: expected_magnitude_error(&cp.truth, est)?,
        avg_abs_seen,
        avg_abs_unseen,
        exp_mag_seen,
        exp_mag_unseen,
    })
}

/// Uniform replay interface over the three estimators.
trait Replay {
    fn update(&mut self, id: u64) -> Result<()>;
    fn query(&mut self, id: u64) -> Result<f64>;
}

impl Replay for CountMinSketch {
    fn update(&mut self, id: u64) -> Result<()> {
        CountMinSketch::update(self, id);
        Ok(())
    }
    fn query(&mut self, id: u64) -> Result<f64> {
        Ok(CountMinSketch::query(self, id) as f64)
    }
}

impl Replay for LearnedCms {
    fn update(&mut self, id: u64) -> Result<()> {
        LearnedCms::update(self, id);
        Ok(())
    }
    fn query(&mut self, id: u64) -> Result<f64> {
        Ok(LearnedCms::query(self, id) as f64)
    }
}

/// OptHash with a per-id cache of classifier routes.
struct Routed<'a> {
    sketch: OptHashSketch,
    features: &'a FeatureSource,
    routes: HashMap<u64, usize>,
}

impl Routed<'_> {
    fn bucket(&mut self, id: u64) -> Result<usize> {
        if let Some(&j) = self.routes.get(&id) {
            return Ok(j);
        }
        let x = self.features.get(id).ok_or_else(|| Error::Data(format!("no features for id {id}")))?;
        let j = self.sketch.route(id, &x)?;
        self.routes.insert(id, j);
        Ok(j)
    }
}

impl Replay for Routed<'_> {
    fn update(&mut self, id: u64) -> Result<()> {
        if self.sketch.mode() == crate::sketches::Mode::Static && !self.sketch.is_stored(id) {
            return Ok(());
        }
        let j = self.bucket(id)?;
        self.sketch.update_routed(id, j);
        Ok(())
    }
    fn query(&mut self, id: u64) -> Result<f64> {
        let j = self.bucket(id)?;
        Ok(self.sketch.query_routed(id, j))
    }
}

fn replay<R: Replay>(est: &mut R, prefix: impl Iterator<Item = u64>, w: &Workload, cps: &[Checkpoint]) -> Result<Vec<Scores>> {
    for id in prefix {
        est.update(id)?;
    }
    let mut out = Vec::with_capacity(cps.len());
    for (seg, cp) in w.segments.iter().zip(cps) {
        for &id in seg {
            est.update(id)?;
        }
        let q: Vec<f64> = cp.ids.iter().map(|&id| est.query(id)).collect::<Result<_>>()?;
        out.push(score(cp, &q)?);
    }
    Ok(out)
}

/// One run of one estimator configuration on one repetition.
struct Run {
    scores: Vec<Scores>,
    wall: f64,
    est_err: Option<f64>,
    sim_err: Option<f64>,
}

/// One CSV row: metrics at one checkpoint, aggregated over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub estimator: String,
    pub memory_kb: f64,
    pub checkpoint: String,
    pub avg_abs: f64,
    pub avg_abs_std: f64,
    pub exp_mag: f64,
    pub exp_mag_std: f64,
    pub est_err: Option<f64>,
    pub sim_err: Option<f64>,
    pub wall_time_s: f64,
    pub seed: u64,
    pub avg_abs_seen: Option<f64>,
    pub avg_abs_unseen: Option<f64>,
    pub exp_mag_seen: Option<f64>,
    pub exp_mag_unseen: Option<f64>,
    /// Baseline hyperparameters chosen per metric.
    pub config: String,
    pub config_hash: String,
}

fn mean_opt(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.collect::<Option<Vec<f64>>>()?;
    (!v.is_empty()).then(|| mean_std(&v).0)
}

/// Runs every (estimator, budget, repetition) cell and aggregates one row per
/// (estimator, budget, checkpoint). Baselines are run for every
/// hyperparameter setting in the grid and the best setting by mean over
/// repetitions is reported separately for each metric.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let params = TrainParams::from(cfg);
    let hash = cfg.hash();
    // (estimator, budget index, setting) → one Run per repetition.
    let mut runs: BTreeMap<(Estimator, usize, String), Vec<Run>> = BTreeMap::new();
    let mut names = Vec::new();
    let mut cached_log = None;

    for rep in 0..cfg.repetitions {
        let rep_seed = child_seed(cfg.seed, rep as u64);
        let w = build_workload(cfg, rep_seed, &mut cached_log)?;
        names.clone_from(&w.segment_names);
        let cps = checkpoints(&w);
        let mut totals: HashMap<u64, u64> = HashMap::new();
        for id in w.all_events() {
            *totals.entry(id).or_default() += 1;
        }
        let mut totals: Vec<(u64, u64)> = totals.into_iter().collect();
        totals.sort_unstable();
        let prefix = w.prefix_summary()?;

        for (bi, &kb) in cfg.budgets_kb.iter().enumerate() {
            let b_total = budget_to_buckets(kb);
            let cell_seed = child_seed(rep_seed, 1000 + bi as u64);
            for &est in &cfg.estimators {
                match est {
                    Estimator::Cms => {
                        for &d in &cfg.cms_depths {
                            if b_total < d {
                                continue;
                            }
                            let t0 = Instant::now();
                            let mut s = CountMinSketch::with_budget(b_total, d, child_seed(cell_seed, d as u64))?;
                            check_budget("cms", s.memory_buckets(), b_total)?;
                            let scores = replay(&mut s, w.prefix.iter().copied(), &w, &cps)?;
                            let run = Run { scores, wall: t0.elapsed().as_secs_f64(), est_err: None, sim_err: None };
                            runs.entry((est, bi, format!("d={d}"))).or_default().push(run);
                        }
                    }
                    Estimator::Lcms => {
                        for &hb in &cfg.heavy_buckets {
                            if 2 * hb > b_total {
                                continue;
                            }
                            let heavy = top_k(&totals, hb);
                            for &d in &cfg.cms_depths {
                                let b_random = b_total - 2 * hb;
                                if b_random > 0 && b_random < d {
                                    continue;
                                }
                                let t0 = Instant::now();
                                let mut s = LearnedCms::new(&heavy, b_total, hb, d, child_seed(cell_seed, d as u64))?;
                                check_budget("lcms", s.memory_buckets(), b_total)?;
                                let scores = replay(&mut s, w.prefix.iter().copied(), &w, &cps)?;
                                let run = Run { scores, wall: t0.elapsed().as_secs_f64(), est_err: None, sim_err: None };
                                runs.entry((est, bi, format!("d={d};b_heavy={hb}"))).or_default().push(run);
                            }
                        }
                    }
                    Estimator::Opthash => {
                        let t0 = Instant::now();
                        let trained = train_opthash(&prefix, b_total, &params, child_seed(cell_seed, 99))?;
                        let sampled: HashSet<u64> = trained.sampled.iter().copied().collect();
                        let objective = trained.objective;
                        let mut r = Routed { sketch: trained.sketch, features: &w.features, routes: HashMap::new() };
                        let rest = w.prefix.iter().copied().filter(|id| !sampled.contains(id));
                        let scores = replay(&mut r, rest, &w, &cps)?;
                        let run = Run {
                            scores,
                            wall: t0.elapsed().as_secs_f64(),
                            est_err: Some(objective.est),
                            sim_err: Some(objective.sim),
                        };
                        runs.entry((est, bi, String::new())).or_default().push(run);
                    }
                }
            }
        }
    }

    let mut rows = Vec::new();
    for &est in &cfg.estimators {
        for (bi, &kb) in cfg.budgets_kb.iter().enumerate() {
            let settings: Vec<(&String, &Vec<Run>)> =
                runs.range((est, bi, String::new())..).take_while(|((e, b, _), _)| *e == est && *b == bi).map(|((_, _, s), r)| (s, r)).collect();
            if settings.is_empty() {
                return Err(Error::Parameter(format!("no feasible {} configuration at {kb} KB", est.name())));
            }
            for (t, name) in names.iter().enumerate() {
                let metric = |runs: &Vec<Run>, f: fn(&Scores) -> f64| mean_std(&runs.iter().map(|r| f(&r.scores[t])).collect::<Vec<_>>());
                let best_by = |f: fn(&Scores) -> f64| {
                    settings
                        .iter()
                        .min_by(|a, b| metric(a.1, f).0.total_cmp(&metric(b.1, f).0))
                        .copied()
                        .expect("non-empty")
                };
                let (abs_name, abs_runs) = best_by(|s| s.avg_abs);
                let (mag_name, mag_runs) = best_by(|s| s.exp_mag);
                let (avg_abs, avg_abs_std) = metric(abs_runs, |s| s.avg_abs);
                let (exp_mag, exp_mag_std) = metric(mag_runs, |s| s.exp_mag);
                let config = if abs_name.is_empty() { String::new() } else { format!("avg_abs:{abs_name}|exp_mag:{mag_name}") };
                let wall = if cfg.record_timing { mean_std(&abs_runs.iter().map(|r| r.wall).collect::<Vec<_>>()).0 } else { 0.0 };
                rows.push(ReportRow {
                    estimator: est.name().to_owned(),
                    memory_kb: kb,
                    checkpoint: name.clone(),
                    avg_abs,
                    avg_abs_std,
                    exp_mag,
                    exp_mag_std,
                    est_err: mean_opt(abs_runs.iter().map(|r| r.est_err)),
                    sim_err: mean_opt(abs_runs.iter().map(|r| r.sim_err)),
                    wall_time_s: wall,
                    seed: cfg.seed,
                    avg_abs_seen: mean_opt(abs_runs.iter().map(|r| r.scores[t].avg_abs_seen)),
                    avg_abs_unseen: mean_opt(abs_runs.iter().map(|r| r.scores[t].avg_abs_unseen)),
                    exp_mag_seen: mean_opt(mag_runs.iter().map(|r| r.scores[t].exp_mag_seen)),
                    exp_mag_unseen: mean_opt(mag_runs.iter().map(|r| r.scores[t].exp_mag_unseen)),
                    config,
                    config_hash: hash.clone(),
                });
            }
        }
    }
    Ok(rows)
}

/// Renders rows as CSV with a header.
pub fn to_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv(rows: &[ReportRow], path: &std::path::Path) -> Result<()> {
    std::fs::write(path, to_csv(rows)?)?;
    Ok(())
}
