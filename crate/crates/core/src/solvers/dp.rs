use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::scheme::HashScheme;
use crate::stream::StreamPrefix;

/// Center used for a segment's absolute-deviation cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SegmentCost {
    /// Deviation from the segment mean, which is what the sketch reports.
    #[default]
    Mean,
    /// Deviation from the segment median (classical 1-D k-median).
    Median,
}

#[derive(Debug, Clone)]
pub struct DpSolution {
    pub scheme: HashScheme,
    pub cost: f64,
    /// Segments as ranges over the frequency-sorted order.
    pub segments: Vec<Range<usize>>,
}

/// Optimal partition of the prefix into at most `b` buckets by frequency
/// alone, using the mean-centered cost.
pub fn dp_optimize(prefix: &StreamPrefix, b: usize) -> Result<HashScheme> {
    dp_optimize_with(prefix, b, SegmentCost::Mean).map(|s| s.scheme)
}

pub fn dp_optimize_with(prefix: &StreamPrefix, b: usize, cost: SegmentCost) -> Result<DpSolution> {
    let freqs = prefix.freqs_f64();
    let (code, total, segments) = dp_partition(&freqs, b, cost)?;
    let scheme = HashScheme::new(prefix, code, b)?;
    Ok(DpSolution { scheme, cost: total, segments })
}

/// Sorted-order segment costs for segments ending at `j`, for every start.
struct CostSweep<'a> {
    v: &'a [f64],
    prefix: &'a [f64],
}

impl CostSweep<'_> {
    #[inline]
    fn mean_cost(&self, i: usize, j: usize, split: usize, mean: f64) -> f64 {
        let p = self.prefix;
        let below = mean * (split - i) as f64 - (p[split] - p[i]);
        let above = (p[j] - p[split]) - mean * (j - split) as f64;
        (below + above).max(0.0)
    }

    #[inline]
    fn median_cost(&self, i: usize, j: usize) -> f64 {
        let p = self.prefix;
        let mid = i + (j - i - 1) / 2;
        let med = self.v[mid];
        let below = med * (mid - i) as f64 - (p[mid] - p[i]);
        let above = (p[j] - p[mid]) - med * (j - mid) as f64;
        (below + above).max(0.0)
    }

    /// Fills `out[i]` with the cost of segment `[i, j)` for all `i < j`.
    fn fill(&self, j: usize, kind: SegmentCost, out: &mut [f64]) {
        match kind {
            SegmentCost::Mean => {
                // Extending a sorted segment to the left never raises its mean, so
                // the first index at or above the mean only moves left.
                let mut split = j - 1;
                for i in (0..j).rev() {
                    let mean = (self.prefix[j] - self.prefix[i]) / (j - i) as f64;
                    if split < i {
                        split = i;
                    }
                    while split > i && self.v[split - 1] >= mean {
                        split -= 1;
                    }
                    out[i] = self.mean_cost(i, j, split, mean);
                }
            }
            SegmentCost::Median => {
                for (i, slot) in out.iter_mut().enumerate().take(j) {
                    *slot = self.median_cost(i, j);
                }
            }
        }
    }
}

/// Optimal contiguous partition of sorted `freqs` into at most `b` segments.
///
/// Returns the bucket of every input position (buckets numbered by ascending
/// frequency), the total cost, and the segment ranges in sorted order. Runs in
/// `O(n²·b)` time and `O(n·b)` space.
pub fn dp_partition(freqs: &[f64], b: usize, kind: SegmentCost) -> Result<(Vec<usize>, f64, Vec<Range<usize>>)> {
    if b == 0 {
        return Err(param("bucket count must be at least 1"));
    }
    let n = freqs.len();
    if n == 0 {
        return Ok((Vec::new(), 0.0, Vec::new()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| freqs[a].total_cmp(&freqs[c]).then(a.cmp(&c)));
    let v: Vec<f64> = order.iter().map(|&i| freqs[i]).collect();
    let mut prefix = vec![0.0; n + 1];
    for (i, x) in v.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x;
    }

    let k_max = b.min(n);
    let width = k_max + 1;
    // best[i * width + k]: optimal cost of the first i sorted values in k segments.
    let mut best = vec![f64::INFINITY; (n + 1) * width];
    let mut arg = vec![0u32; (n + 1) * width];
    best[0] = 0.0;

    let sweep = CostSweep { v: &v, prefix: &prefix };
    let mut seg_cost = vec![0.0; n];
    let mut row = vec![f64::INFINITY; width];
    let mut row_arg = vec![0u32; width];
    for j in 1..=n {
        sweep.fill(j, kind, &mut seg_cost);
        row.fill(f64::INFINITY);
        for i in 0..j {
            let c = seg_cost[i];
            let prev = &best[i * width..i * width + width];
            let k_hi = k_max.min(i + 1);
            for k in 1..=k_hi {
                let cand = prev[k - 1] + c;
                if cand < row[k] {
                    row[k] = cand;
                    row_arg[k] = i as u32;
                }
            }
        }
        best[j * width..j * width + width].copy_from_slice(&row);
        arg[j * width..j * width + width].copy_from_slice(&row_arg);
    }

    let mut k_best = 1;
    for k in 1..=k_max {
        if best[n * width + k] < best[n * width + k_best] {
            k_best = k;
        }
    }
    let total = best[n * width + k_best];

    let mut segments = Vec::with_capacity(k_best);
    let mut j = n;
    for k in (1..=k_best).rev() {
        let i = arg[j * width + k] as usize;
        segments.push(i..j);
        j = i;
    }
    segments.reverse();

    let mut code = vec![0; n];
    for (bucket, seg) in segments.iter().enumerate() {
        for &pos in &order[seg.clone()] {
            code[pos] = bucket;
        }
    }
    Ok((code, total, segments))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::evaluate;
    use crate::stream::ingest_prefix;
    use approx::assert_relative_eq;

    fn prefix(freqs: &[u64]) -> StreamPrefix {
        let mut ev = Vec::new();
        for (i, &f) in freqs.iter().enumerate() {
            for _ in 0..f {
                ev.push((i as u64, [i as f64]));
            }
        }
        ingest_prefix(ev).unwrap()
    }

    fn naive_seg(v: &[f64], kind: SegmentCost) -> f64 {
        let c = match kind {
            SegmentCost::Mean => v.iter().sum::<f64>() / v.len() as f64,
            SegmentCost::Median => v[(v.len() - 1) / 2],
        };
        v.iter().map(|x| (x - c).abs()).sum()
    }

    #[test]
    fn two_constant_groups() {
        let p = prefix(&[1, 1, 1, 9, 9]);
        let sol = dp_optimize_with(&p, 2, SegmentCost::Mean).unwrap();
        assert_eq!(sol.cost, 0.0);
        assert_eq!(sol.scheme.code(), &[0, 0, 0, 1, 1]);
    }

    #[test]
    fn small_instance_matches_hand_value() {
        let p = prefix(&[1, 2, 10]);
        let sol = dp_optimize_with(&p, 2, SegmentCost::Mean).unwrap();
        assert_relative_eq!(sol.cost, 1.0);
        assert_eq!(sol.scheme.code(), &[0, 0, 1]);
        assert_relative_eq!(evaluate(&sol.scheme, &p, 1.0).unwrap().est, 1.0);
    }

    #[test]
    fn enough_buckets_gives_zero_cost() {
        let p = prefix(&[4, 2, 8, 3]);
        let sol = dp_optimize_with(&p, 6, SegmentCost::Mean).unwrap();
        assert_eq!(sol.cost, 0.0);
    }

    #[test]
    fn zero_buckets_rejected() {
        assert!(dp_optimize(&prefix(&[1]), 0).is_err());
    }

    #[test]
    fn sweep_costs_match_direct_sums() {
        let v: Vec<f64> = vec![1.0, 1.0, 2.0, 3.0, 3.0, 7.0, 20.0, 21.0, 50.0];
        let mut p = vec![0.0; v.len() + 1];
        for (i, x) in v.iter().enumerate() {
            p[i + 1] = p[i] + x;
        }
        let sweep = CostSweep { v: &v, prefix: &p };
        let mut out = vec![0.0; v.len()];
        for kind in [SegmentCost::Mean, SegmentCost::Median] {
            for j in 1..=v.len() {
                sweep.fill(j, kind, &mut out);
                for i in 0..j {
                    assert_relative_eq!(out[i], naive_seg(&v[i..j], kind), epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn median_cost_never_exceeds_mean_cost() {
        let freqs = [1.0, 3.0, 3.0, 4.0, 10.0, 11.0, 30.0, 31.0, 90.0];
        let (_, mean, _) = dp_partition(&freqs, 3, SegmentCost::Mean).unwrap();
        let (_, median, _) = dp_partition(&freqs, 3, SegmentCost::Median).unwrap();
        assert!(median <= mean + 1e-12);
    }
}
