//! The λ-weighted estimation + similarity objective and its per-bucket
//! incremental bookkeeping.
//!
//! For a bucket with members `I`, mean `μ = Σf/c`:
//!
//! * estimation error `e = Σ_{i∈I} |f_i − μ|`
//! * similarity error `s = Σ_{(i,k)∈I×I} ‖x_i − x_k‖²` over ordered pairs, which
//!   equals `2c·Σ‖x_i‖² − 2‖Σx_i‖²`.
//!
//! The objective is `Σ_j λ·e_j + (1−λ)·s_j`. The two terms are not
//! normalized against each other.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::scheme::{validate_scheme, HashScheme};
use crate::stream::StreamPrefix;

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(param(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub est: f64,
    pub sim: f64,
    pub overall: f64,
    pub lambda: f64,
}

impl ObjectiveValue {
    pub fn new(est: f64, sim: f64, lambda: f64) -> Self {
        Self { est, sim, overall: lambda * est + (1.0 - lambda) * sim, lambda }
    }
}

/// Sum of absolute deviations of `freqs` from `mean`.
pub fn abs_deviation(freqs: &[f64], mean: f64) -> f64 {
    freqs.iter().map(|f| (f - mean).abs()).sum()
}

/// Ordered-pair squared distance sum by the double loop. Reference path for
/// the moment identity.
pub fn pairwise_similarity_naive(feats: &[&[f64]]) -> f64 {
    let mut s = 0.0;
    for a in feats {
        for b in feats {
            s += a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
    }
    s
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Cached statistics of one bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    pub count: usize,
    pub freq_sum: f64,
    pub mean: f64,
    pub feat_sum: Vec<f64>,
    pub feat_sqsum: f64,
    pub est_err: f64,
    pub sim_err: f64,
}

impl BucketStats {
    pub fn empty(dim: usize) -> Self {
        Self {
            count: 0,
            freq_sum: 0.0,
            mean: 0.0,
            feat_sum: vec![0.0; dim],
            feat_sqsum: 0.0,
            est_err: 0.0,
            sim_err: 0.0,
        }
    }

    /// Statistics computed from scratch.
    pub fn from_members(freqs: &[f64], feats: &[&[f64]], dim: usize) -> Self {
        let mut st = Self::empty(dim);
        st.count = freqs.len();
        st.freq_sum = freqs.iter().sum();
        for f in feats {
            for (acc, x) in st.feat_sum.iter_mut().zip(f.iter()) {
                *acc += x;
            }
            st.feat_sqsum += sq_norm(f);
        }
        st.refresh_mean();
        st.est_err = abs_deviation(freqs, st.mean);
        st.sim_err = st.moment_similarity();
        st
    }

    fn refresh_mean(&mut self) {
        self.mean = if self.count == 0 { 0.0 } else { self.freq_sum / self.count as f64 };
    }

    fn moment_similarity(&self) -> f64 {
        let s = 2.0 * self.count as f64 * self.feat_sqsum - 2.0 * sq_norm(&self.feat_sum);
        s.max(0.0)
    }

    /// `λ·e + (1−λ)·s`.
    pub fn contribution(&self, lambda: f64) -> f64 {
        lambda * self.est_err + (1.0 - lambda) * self.sim_err
    }

    /// Stats after inserting an element with frequency `freq` and features
    /// `feat`. `member_freqs` are the frequencies of the current members.
    pub fn added(&self, freq: f64, feat: &[f64], member_freqs: &[f64]) -> BucketStats {
        let mut st = self.clone();
        st.count += 1;
        st.freq_sum += freq;
        for (acc, x) in st.feat_sum.iter_mut().zip(feat.iter()) {
            *acc += x;
        }
        st.feat_sqsum += sq_norm(feat);
        st.refresh_mean();
        st.est_err = abs_deviation(member_freqs, st.mean) + (freq - st.mean).abs();
        st.sim_err = st.moment_similarity();
        st
    }

    /// Contribution the bucket would have after inserting an element, without
    /// materializing the new stats. Terms with zero weight are skipped.
    pub fn cost_if_added(&self, freq: f64, feat: &[f64], member_freqs: &[f64], lambda: f64) -> f64 {
        let count = self.count + 1;
        let mut cost = 0.0;
        if lambda > 0.0 {
            let mean = (self.freq_sum + freq) / count as f64;
            cost += lambda * (abs_deviation(member_freqs, mean) + (freq - mean).abs());
        }
        if lambda < 1.0 {
            let sqsum = self.feat_sqsum + sq_norm(feat);
            let sum_sq: f64 = self.feat_sum.iter().zip(feat.iter()).map(|(a, x)| (a + x) * (a + x)).sum();
            cost += (1.0 - lambda) * (2.0 * count as f64 * sqsum - 2.0 * sum_sq).max(0.0);
        }
        cost
    }

    /// Stats after removing an element. `member_freqs` are the frequencies of
    /// the current members, the removed one included.
    pub fn removed(&self, freq: f64, feat: &[f64], member_freqs: &[f64]) -> Result<BucketStats> {
        if self.count == 0 {
            return Err(Error::State("cannot remove from an empty bucket".into()));
        }
        if self.count == 1 {
            return Ok(Self::empty(self.feat_sum.len()));
        }
        let mut st = self.clone();
        st.count -= 1;
        st.freq_sum -= freq;
        for (acc, x) in st.feat_sum.iter_mut().zip(feat.iter()) {
            *acc -= x;
        }
        st.feat_sqsum -= sq_norm(feat);
        st.refresh_mean();
        st.est_err = (abs_deviation(member_freqs, st.mean) - (freq - st.mean).abs()).max(0.0);
        st.sim_err = st.moment_similarity();
        Ok(st)
    }
}

/// Inserts an element into a bucket, returning the new stats and the new
/// objective contribution of the bucket.
pub fn bucket_delta_add(
    stats: &BucketStats,
    freq: f64,
    feat: &[f64],
    member_freqs: &[f64],
    lambda: f64,
) -> (BucketStats, f64) {
    let st = stats.added(freq, feat, member_freqs);
    let c = st.contribution(lambda);
    (st, c)
}

/// Removes an element from a bucket; inverse of [`bucket_delta_add`].
pub fn bucket_delta_remove(
    stats: &BucketStats,
    freq: f64,
    feat: &[f64],
    member_freqs: &[f64],
    lambda: f64,
) -> Result<(BucketStats, f64)> {
    let st = stats.removed(freq, feat, member_freqs)?;
    let c = st.contribution(lambda);
    Ok((st, c))
}

/// Per-bucket statistics of a scheme, computed from scratch.
pub fn bucket_stats(scheme: &HashScheme, prefix: &StreamPrefix) -> Vec<BucketStats> {
    let freqs = prefix.freqs_f64();
    scheme
        .members()
        .iter()
        .map(|m| {
            let f: Vec<f64> = m.iter().map(|&i| freqs[i]).collect();
            let x: Vec<&[f64]> = m.iter().map(|&i| prefix.features(i)).collect();
            BucketStats::from_members(&f, &x, prefix.dim())
        })
        .collect()
}

fn require_valid(scheme: &HashScheme, prefix: &StreamPrefix, lambda: f64) -> Result<()> {
    check_lambda(lambda)?;
    if !validate_scheme(scheme, prefix) {
        return Err(param("scheme does not match prefix"));
    }
    Ok(())
}

/// Objective of `scheme` on `prefix`.
pub fn evaluate(scheme: &HashScheme, prefix: &StreamPrefix, lambda: f64) -> Result<ObjectiveValue> {
    require_valid(scheme, prefix, lambda)?;
    let stats = bucket_stats(scheme, prefix);
    let est = stats.iter().map(|s| s.est_err).sum();
    let sim = stats.iter().map(|s| s.sim_err).sum();
    Ok(ObjectiveValue::new(est, sim, lambda))
}

/// Objective with the similarity term computed by the pairwise double loop.
pub fn evaluate_naive(scheme: &HashScheme, prefix: &StreamPrefix, lambda: f64) -> Result<ObjectiveValue> {
    require_valid(scheme, prefix, lambda)?;
    let freqs = prefix.freqs_f64();
    let (mut est, mut sim) = (0.0, 0.0);
    for m in scheme.members() {
        if m.is_empty() {
            continue;
        }
        let f: Vec<f64> = m.iter().map(|&i| freqs[i]).collect();
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        est += abs_deviation(&f, mean);
        let x: Vec<&[f64]> = m.iter().map(|&i| prefix.features(i)).collect();
        sim += pairwise_similarity_naive(&x);
    }
    Ok(ObjectiveValue::new(est, sim, lambda))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::stream::ingest_prefix;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Prefix whose element `i` occurs `freqs[i]` times with features `feats[i]`.
    pub(crate) fn prefix_from(freqs: &[u64], feats: &[Vec<f64>]) -> StreamPrefix {
        let mut ev = Vec::new();
        for (i, &f) in freqs.iter().enumerate() {
            for _ in 0..f {
                ev.push((i as u64, feats[i].clone()));
            }
        }
        ingest_prefix(ev).unwrap()
    }

    #[test]
    fn constant_bucket_has_zero_estimation_error() {
        let p = prefix_from(&[5, 5], &[vec![0.0], vec![1.0]]);
        let s = HashScheme::new(&p, vec![0, 0], 1).unwrap();
        let v = evaluate(&s, &p, 1.0).unwrap();
        assert_eq!(v.est, 0.0);
        assert_eq!(v.overall, 0.0);
    }

    #[test]
    fn two_bucket_partition_error() {
        let p = prefix_from(&[1, 2, 10], &[vec![0.0], vec![0.0], vec![0.0]]);
        let s = HashScheme::new(&p, vec![0, 0, 1], 2).unwrap();
        let v = evaluate(&s, &p, 1.0).unwrap();
        assert_relative_eq!(v.est, 1.0);
        assert_relative_eq!(v.overall, 1.0);
    }

    #[test]
    fn ordered_pair_similarity() {
        let p = prefix_from(&[1, 1], &[vec![0.0], vec![2.0]]);
        let s = HashScheme::new(&p, vec![0, 0], 1).unwrap();
        let v = evaluate(&s, &p, 0.0).unwrap();
        assert_relative_eq!(v.sim, 8.0);
        assert_relative_eq!(v.overall, 8.0);
    }

    #[test]
    fn lambda_out_of_range() {
        let p = prefix_from(&[1], &[vec![0.0]]);
        let s = HashScheme::new(&p, vec![0], 1).unwrap();
        assert!(matches!(evaluate(&s, &p, 1.5), Err(Error::Parameter(_))));
        assert!(matches!(evaluate(&s, &p, -0.1), Err(Error::Parameter(_))));
    }

    #[test]
    fn add_to_empty() {
        let st = BucketStats::empty(1).added(4.0, &[0.0], &[]);
        assert_eq!(st.count, 1);
        assert_eq!(st.mean, 4.0);
        assert_eq!(st.est_err, 0.0);
        assert_eq!(st.sim_err, 0.0);
    }

    #[test]
    fn add_recomputes_estimation_error() {
        let base = BucketStats::from_members(&[1.0, 2.0], &[&[0.0], &[0.0]], 1);
        let (st, _) = bucket_delta_add(&base, 10.0, &[0.0], &[1.0, 2.0], 1.0);
        let mu = 13.0 / 3.0;
        assert_relative_eq!(st.mean, mu);
        assert_relative_eq!(st.est_err, (1.0 - mu).abs() + (2.0 - mu).abs() + (10.0 - mu).abs(), max_relative = 1e-12);
        assert_relative_eq!(st.est_err, 11.333333333333334, max_relative = 1e-12);
    }

    #[test]
    fn add_one_ordered_pair() {
        let base = BucketStats::from_members(&[1.0], &[&[0.0, 0.0]], 2);
        let st = base.added(1.0, &[1.0, 0.0], &[1.0]);
        assert_relative_eq!(st.sim_err - base.sim_err, 2.0);
    }

    #[test]
    fn remove_sole_member() {
        let base = BucketStats::from_members(&[3.0], &[&[1.0, 2.0]], 2);
        let st = base.removed(3.0, &[1.0, 2.0], &[3.0]).unwrap();
        assert_eq!(st, BucketStats::empty(2));
    }

    #[test]
    fn remove_heavy_member() {
        let base = BucketStats::from_members(&[1.0, 2.0, 10.0], &[&[0.0], &[0.0], &[0.0]], 1);
        let (st, c) = bucket_delta_remove(&base, 10.0, &[0.0], &[1.0, 2.0, 10.0], 1.0).unwrap();
        assert_relative_eq!(st.mean, 1.5);
        assert_relative_eq!(st.est_err, 1.0, max_relative = 1e-12);
        assert_relative_eq!(c, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn remove_from_empty_is_state_error() {
        let r = BucketStats::empty(1).removed(1.0, &[0.0], &[]);
        assert!(matches!(r, Err(Error::State(_))));
    }

    #[test]
    fn singleton_buckets_have_zero_objective() {
        let p = prefix_from(&[3, 1, 7, 2], &[vec![0.0], vec![5.0], vec![-2.0], vec![1.0]]);
        let s = HashScheme::new(&p, vec![3, 0, 1, 4], 6).unwrap();
        let v = evaluate(&s, &p, 0.5).unwrap();
        assert_eq!(v.est, 0.0);
        assert_eq!(v.sim, 0.0);
    }

    fn arb_bucket() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>)> {
        (1usize..=50).prop_flat_map(|c| {
            (
                proptest::collection::vec(1u32..100, c).prop_map(|v| v.into_iter().map(f64::from).collect()),
                proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 3), c),
            )
        })
    }

    proptest! {
        #[test]
        fn moment_identity_matches_double_loop((freqs, feats) in arb_bucket()) {
            let x: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
            let st = BucketStats::from_members(&freqs, &x, 3);
            let naive = pairwise_similarity_naive(&x);
            prop_assert!((st.sim_err - naive).abs() <= 1e-9 * naive.max(1.0));
        }

        #[test]
        fn remove_then_add_restores((freqs, feats) in arb_bucket(), pick in any::<proptest::sample::Index>()) {
            let x: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
            let st = BucketStats::from_members(&freqs, &x, 3);
            let k = pick.index(freqs.len());
            let removed = st.removed(freqs[k], &feats[k], &freqs).unwrap();
            let mut rest = freqs.clone();
            rest.remove(k);
            let back = removed.added(freqs[k], &feats[k], &rest);
            prop_assert_eq!(back.count, st.count);
            prop_assert!((back.est_err - st.est_err).abs() <= 1e-9 * st.est_err.max(1.0));
            prop_assert!((back.sim_err - st.sim_err).abs() <= 1e-9 * st.sim_err.max(1.0));
            prop_assert!((back.mean - st.mean).abs() <= 1e-9 * st.mean.abs().max(1.0));
        }

        #[test]
        fn evaluate_is_invariant_to_bucket_relabeling(
            code in proptest::collection::vec(0usize..4, 2..12),
            lambda in 0.0f64..=1.0,
        ) {
            let n = code.len();
            let freqs: Vec<u64> = (0..n as u64).map(|i| 1 + (i * 7) % 11).collect();
            let feats: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 * 0.5, (i % 3) as f64]).collect();
            let p = prefix_from(&freqs, &feats);
            let perm = [2usize, 0, 3, 1];
            let a = HashScheme::new(&p, code.clone(), 4).unwrap();
            let b = HashScheme::new(&p, code.iter().map(|&j| perm[j]).collect(), 4).unwrap();
            let va = evaluate(&a, &p, lambda).unwrap();
            let vb = evaluate(&b, &p, lambda).unwrap();
            prop_assert!((va.overall - vb.overall).abs() <= 1e-9 * va.overall.max(1.0));
            let naive = evaluate_naive(&a, &p, lambda).unwrap();
            prop_assert!((va.overall - naive.overall).abs() <= 1e-9 * naive.overall.max(1.0));
        }
    }
}
