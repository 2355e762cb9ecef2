use rand::Rng;

use crate::error::{param, Error, Result};
use crate::rng::seeded;

/// Bytes charged per bucket.
pub const BYTES_PER_BUCKET: f64 = 4.0;

/// Buckets that fit in `memory_kb` kilobytes.
pub fn budget_to_buckets(memory_kb: f64) -> usize {
    (memory_kb * 1000.0 / BYTES_PER_BUCKET + 1e-9).floor() as usize
}

/// Splits `b_total` into `(stored ids, buckets)` with ratio `c` of buckets to
/// ids: `n = ⌊b_total / (1 + c)⌋`, `b = b_total − n`.
pub fn split_budget(b_total: usize, c: f64) -> Result<(usize, usize)> {
    if !(c > 0.0) {
        return Err(param(format!("bucket ratio {c} must be positive")));
    }
    let n = if c.is_infinite() { 0 } else { (b_total as f64 / (1.0 + c)).floor() as usize };
    Ok((n, b_total - n))
}

/// Fails if an estimator is charged more than its budget.
pub fn check_budget(estimator: &str, charged: usize, b_total: usize) -> Result<()> {
    if charged > b_total {
        return Err(Error::State(format!("{estimator} uses {charged} buckets of a {b_total} budget")));
    }
    Ok(())
}

/// Ids of the `k` largest entries of `freqs` (ties to the lower id), for
/// `freqs` indexed by id.
pub fn top_k(freqs: &[(u64, u64)], k: usize) -> Vec<u64> {
    let mut order: Vec<&(u64, u64)> = freqs.iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    order.into_iter().take(k).map(|p| p.0).collect()
}

/// Draws `k` distinct items without replacement, each step choosing among
/// the remaining items with probability proportional to its weight. Returns
/// indices into `weights` in draw order; all of them if `k ≥ len`.
pub fn weighted_sample(weights: &[f64], k: usize, seed: u64) -> Vec<usize> {
    // Exponential-clock form: the order of ln(u)/w is the sequential draw order.
    let mut rng = seeded(seed, 21);
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u: f64 = 1.0 - rng.gen::<f64>();
            (if w > 0.0 { u.ln() / w } else { f64::NEG_INFINITY }, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().take(k).map(|(_, i)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_arithmetic() {
        assert_eq!(budget_to_buckets(4.0), 1000);
        assert_eq!(budget_to_buckets(120.0), 30000);
        assert_eq!(budget_to_buckets(1.2), 300);
        assert_eq!(split_budget(1000, 0.03).unwrap(), (970, 30));
        assert_eq!(split_budget(1000, 0.3).unwrap(), (769, 231));
        assert_eq!(split_budget(1000, f64::INFINITY).unwrap(), (0, 1000));
        assert_eq!(split_budget(1000, 1e12).unwrap(), (0, 1000));
        assert!(split_budget(10, 0.0).is_err());
        assert!(check_budget("x", 11, 10).is_err());
    }

    #[test]
    fn top_k_ties() {
        assert_eq!(top_k(&[(5, 3), (2, 9), (7, 3), (1, 1)], 3), vec![2, 5, 7]);
    }

    #[test]
    fn weighted_sample_prefers_heavy_items() {
        let w = [100.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let first = (0..2000).filter(|&s| weighted_sample(&w, 1, s)[0] == 0).count();
        // P(first draw = 0) = 100/109.
        assert!((first as f64 / 2000.0 - 100.0 / 109.0).abs() < 0.03);
        let all = weighted_sample(&w, 20, 1);
        let mut sorted = all.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        assert_eq!(weighted_sample(&w, 3, 7), weighted_sample(&w, 3, 7));
    }
}
