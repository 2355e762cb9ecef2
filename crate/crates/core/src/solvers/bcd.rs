use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::objective::{bucket_stats, check_lambda, evaluate, BucketStats, ObjectiveValue};
use crate::rng::{child_seed, permutation, seeded};
use crate::scheme::HashScheme;
use crate::solvers::dp::dp_optimize;
use crate::stream::StreamPrefix;

/// Starting assignment for a descent run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// Every element to a uniformly random bucket.
    Random,
    /// Sort by frequency descending and cut into equal contiguous blocks.
    SortedBlocks,
    /// Top `b − 1` elements by frequency in singleton buckets, the rest in the last.
    HeavyHitter,
    /// The frequency-only dynamic-programming optimum.
    DpWarmStart,
}

impl std::str::FromStr for Init {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Init::Random),
            "sorted-blocks" => Ok(Init::SortedBlocks),
            "heavy-hitter" => Ok(Init::HeavyHitter),
            "dp-warm-start" | "dp" => Ok(Init::DpWarmStart),
            _ => Err(param(format!("unknown init {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcdConfig {
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop when a sweep improves the objective by less than this. `None`
    /// means `1e-6` times the initial objective.
    pub tol: Option<f64>,
    pub restarts: usize,
    pub init: Init,
    pub seed: u64,
}

impl Default for BcdConfig {
    fn default() -> Self {
        Self { lambda: 1.0, max_iters: 100, tol: None, restarts: 1, init: Init::Random, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct BcdResult {
    pub scheme: HashScheme,
    pub objective: ObjectiveValue,
    /// Objective before the first sweep and after every sweep of the winning restart.
    pub trace: Vec<f64>,
    pub restart_traces: Vec<Vec<f64>>,
    pub restart_objectives: Vec<f64>,
    pub best_restart: usize,
}

/// Mutable assignment state for one descent run.
struct Assignment<'a> {
    lambda: f64,
    freqs: &'a [f64],
    prefix: &'a StreamPrefix,
    code: Vec<usize>,
    members: Vec<Vec<usize>>,
    member_freqs: Vec<Vec<f64>>,
    slot: Vec<usize>,
    stats: Vec<BucketStats>,
    cost: Vec<f64>,
}

impl<'a> Assignment<'a> {
    fn new(prefix: &'a StreamPrefix, freqs: &'a [f64], code: Vec<usize>, b: usize, lambda: f64) -> Self {
        let n = code.len();
        let mut a = Assignment {
            lambda,
            freqs,
            prefix,
            code,
            members: vec![Vec::new(); b],
            member_freqs: vec![Vec::new(); b],
            slot: vec![0; n],
            stats: Vec::new(),
            cost: vec![0.0; b],
        };
        for i in 0..n {
            let j = a.code[i];
            a.slot[i] = a.members[j].len();
            a.members[j].push(i);
            a.member_freqs[j].push(freqs[i]);
        }
        a.refresh();
        a
    }

    /// Recomputes all cached bucket statistics from the member lists.
    fn refresh(&mut self) {
        let dim = self.prefix.dim();
        self.stats = self
            .members
            .iter()
            .zip(&self.member_freqs)
            .map(|(m, f)| {
                let x: Vec<&[f64]> = m.iter().map(|&i| self.prefix.features(i)).collect();
                BucketStats::from_members(f, &x, dim)
            })
            .collect();
        for (c, s) in self.cost.iter_mut().zip(&self.stats) {
            *c = s.contribution(self.lambda);
        }
    }

    fn total(&self) -> f64 {
        self.cost.iter().sum()
    }

    fn detach(&mut self, i: usize) -> usize {
        let j = self.code[i];
        let x = self.prefix.features(i);
        self.stats[j] = self.stats[j]
            .removed(self.freqs[i], x, &self.member_freqs[j])
            .expect("element is a member of its bucket");
        self.cost[j] = self.stats[j].contribution(self.lambda);
        let s = self.slot[i];
        self.members[j].swap_remove(s);
        self.member_freqs[j].swap_remove(s);
        if let Some(&moved) = self.members[j].get(s) {
            self.slot[moved] = s;
        }
        j
    }

    fn attach(&mut self, i: usize, j: usize) {
        let x = self.prefix.features(i);
        self.stats[j] = self.stats[j].added(self.freqs[i], x, &self.member_freqs[j]);
        self.cost[j] = self.stats[j].contribution(self.lambda);
        self.code[i] = j;
        self.slot[i] = self.members[j].len();
        self.members[j].push(i);
        self.member_freqs[j].push(self.freqs[i]);
    }

    /// Bucket minimizing the total objective once `i` is re-inserted. With `i`
    /// detached, that total differs from the current one only through the
    /// chosen bucket, so comparing per-bucket increments suffices. Ties go to
    /// the lowest index.
    fn best_bucket(&self, i: usize) -> (usize, f64) {
        let x = self.prefix.features(i);
        let f = self.freqs[i];
        let mut best = (0, f64::INFINITY);
        for (j, st) in self.stats.iter().enumerate() {
            let delta = st.cost_if_added(f, x, &self.member_freqs[j], self.lambda) - self.cost[j];
            if delta < best.1 {
                best = (j, delta);
            }
        }
        best
    }

    /// One pass over all elements in `order`. Returns the number of moves.
    fn sweep(&mut self, order: &[usize]) -> usize {
        let mut moves = 0;
        for &i in order {
            let from = self.detach(i);
            let (to, _) = self.best_bucket(i);
            self.attach(i, to);
            if to != from {
                moves += 1;
            }
        }
        self.refresh();
        moves
    }
}

fn initial_code(prefix: &StreamPrefix, freqs: &[f64], b: usize, init: Init, seed: u64) -> Result<Vec<usize>> {
    let n = freqs.len();
    let by_freq_desc = || {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &c| freqs[c].total_cmp(&freqs[a]).then(a.cmp(&c)));
        order
    };
    Ok(match init {
        Init::Random => {
            let mut rng = seeded(seed, 1);
            (0..n).map(|_| rng.gen_range(0..b)).collect()
        }
        Init::SortedBlocks => {
            let block = n.div_ceil(b).max(1);
            let mut code = vec![0; n];
            for (rank, i) in by_freq_desc().into_iter().enumerate() {
                code[i] = (rank / block).min(b - 1);
            }
            code
        }
        Init::HeavyHitter => {
            let mut code = vec![b - 1; n];
            for (rank, i) in by_freq_desc().into_iter().take(b - 1).enumerate() {
                code[i] = rank;
            }
            code
        }
        Init::DpWarmStart => dp_optimize(prefix, b)?.code().to_vec(),
    })
}

/// Block coordinate descent over single-element bucket moves.
///
/// Each sweep visits the elements in a fresh seeded random order, detaches
/// each from its bucket and re-inserts it where the total objective is
/// smallest. A run stops when a sweep improves the objective by less than the
/// tolerance, makes no move, or `max_iters` sweeps have run. The best of
/// `restarts` independent runs (ties to the earliest) is returned.
pub fn bcd_optimize(prefix: &StreamPrefix, b: usize, cfg: &BcdConfig) -> Result<BcdResult> {
    check_lambda(cfg.lambda)?;
    if b == 0 {
        return Err(param("bucket count must be at least 1"));
    }
    if cfg.restarts == 0 {
        return Err(param("restarts must be at least 1"));
    }
    if cfg.tol.is_some_and(|t| !(t >= 0.0)) {
        return Err(param("tolerance must be non-negative"));
    }
    let freqs = prefix.freqs_f64();
    let n = prefix.n();

    let mut restart_traces = Vec::with_capacity(cfg.restarts);
    let mut restart_objectives = Vec::with_capacity(cfg.restarts);
    let mut best: Option<(usize, Vec<usize>)> = None;
    for r in 0..cfg.restarts {
        let seed = child_seed(cfg.seed, r as u64);
        let code = initial_code(prefix, &freqs, b, cfg.init, seed)?;
        let mut state = Assignment::new(prefix, &freqs, code, b, cfg.lambda);
        let mut trace = vec![state.total()];
        let tol = cfg.tol.unwrap_or(1e-6 * trace[0]);
        let mut rng = seeded(seed, 2);
        for _ in 0..cfg.max_iters {
            let order = permutation(&mut rng, n);
            let moves = state.sweep(&order);
            let prev = *trace.last().unwrap();
            let cur = state.total();
            trace.push(cur);
            if moves == 0 || prev - cur < tol {
                break;
            }
        }
        let final_value = *trace.last().unwrap();
        if best.as_ref().is_none_or(|(b_r, _)| final_value < restart_objectives[*b_r]) {
            best = Some((r, state.code.clone()));
        }
        restart_objectives.push(final_value);
        restart_traces.push(trace);
    }
    let (best_restart, code) = best.expect("at least one restart");
    let scheme = HashScheme::new(prefix, code, b)?;
    let objective = evaluate(&scheme, prefix, cfg.lambda)?;
    Ok(BcdResult {
        scheme,
        objective,
        trace: restart_traces[best_restart].clone(),
        restart_traces,
        restart_objectives,
        best_restart,
    })
}

/// Largest objective decrease available from moving one element, for
/// checking local optimality.
pub fn best_single_move_gain(scheme: &HashScheme, prefix: &StreamPrefix, lambda: f64) -> Result<f64> {
    let freqs = prefix.freqs_f64();
    let mut state = Assignment::new(prefix, &freqs, scheme.code().to_vec(), scheme.b(), lambda);
    let base = bucket_stats(scheme, prefix).iter().map(|s| s.contribution(lambda)).sum::<f64>();
    let mut gain: f64 = 0.0;
    for i in 0..prefix.n() {
        let from = state.detach(i);
        let (_, delta) = state.best_bucket(i);
        let after = state.total() + delta;
        gain = gain.max(base - after);
        state.attach(i, from);
    }
    Ok(gain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::brute_force;
    use crate::stream::ingest_prefix;
    use approx::assert_relative_eq;

    fn prefix(freqs: &[u64], feats: &[Vec<f64>]) -> StreamPrefix {
        let mut ev = Vec::new();
        for (i, &f) in freqs.iter().enumerate() {
            for _ in 0..f {
                ev.push((i as u64, feats[i].clone()));
            }
        }
        ingest_prefix(ev).unwrap()
    }

    fn cfg(lambda: f64, restarts: usize, init: Init, seed: u64) -> BcdConfig {
        BcdConfig { lambda, restarts, init, seed, ..BcdConfig::default() }
    }

    #[test]
    fn matches_brute_force_on_small_instance() {
        let p = prefix(&[1, 2, 10], &[vec![0.3], vec![-1.0], vec![2.0]]);
        let res = bcd_optimize(&p, 2, &cfg(1.0, 10, Init::Random, 1)).unwrap();
        let (_, oracle) = brute_force(&p, 2, 1.0).unwrap();
        assert_relative_eq!(res.objective.overall, oracle.overall);
        assert_relative_eq!(res.objective.overall, 1.0);
    }

    #[test]
    fn enough_buckets_reaches_zero() {
        let p = prefix(&[5, 1, 9, 2, 2], &[vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        for init in [Init::Random, Init::SortedBlocks, Init::HeavyHitter, Init::DpWarmStart] {
            let res = bcd_optimize(&p, 5, &cfg(0.5, 3, init, 9)).unwrap();
            assert_eq!(res.objective.overall, 0.0, "{init:?}");
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let freqs: Vec<u64> = (1..=30).map(|i| (i * 37 % 17) + 1).collect();
        let feats: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 5) as f64, (i % 7) as f64]).collect();
        let p = prefix(&freqs, &feats);
        let a = bcd_optimize(&p, 4, &cfg(0.5, 3, Init::Random, 77)).unwrap();
        let b = bcd_optimize(&p, 4, &cfg(0.5, 3, Init::Random, 77)).unwrap();
        assert_eq!(a.scheme, b.scheme);
        assert_eq!(a.restart_traces, b.restart_traces);
    }

    #[test]
    fn trace_is_non_increasing_and_terminal_state_is_local_optimum() {
        let freqs: Vec<u64> = (1..=40).map(|i| (i * i * 13 % 50) + 1).collect();
        let feats: Vec<Vec<f64>> = (0..40).map(|i| vec![((i * 7) % 11) as f64 * 0.3, (i % 4) as f64]).collect();
        let p = prefix(&freqs, &feats);
        for lambda in [0.0, 0.5, 1.0] {
            let c = BcdConfig { tol: Some(0.0), max_iters: 1000, ..cfg(lambda, 4, Init::Random, 5) };
            let res = bcd_optimize(&p, 5, &c).unwrap();
            for t in &res.restart_traces {
                for w in t.windows(2) {
                    assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0), "{t:?}");
                }
            }
            let gain = best_single_move_gain(&res.scheme, &p, lambda).unwrap();
            assert!(gain <= 1e-9 * res.objective.overall.max(1.0), "gain {gain}");
        }
    }

    #[test]
    fn heavy_hitter_init_isolates_top_elements() {
        let p = prefix(&[1, 50, 2, 40, 3], &vec![vec![0.0]; 5]);
        let freqs = p.freqs_f64();
        let code = initial_code(&p, &freqs, 3, Init::HeavyHitter, 0).unwrap();
        assert_eq!(code, vec![2, 0, 2, 1, 2]);
        let blocks = initial_code(&p, &freqs, 2, Init::SortedBlocks, 0).unwrap();
        assert_eq!(blocks, vec![1, 0, 1, 0, 0]);
    }

    #[test]
    fn zero_buckets_rejected() {
        let p = prefix(&[1], &[vec![0.0]]);
        assert!(bcd_optimize(&p, 0, &BcdConfig::default()).is_err());
    }
}
