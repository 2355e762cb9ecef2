use crate::error::{param, Error, Result};
use crate::objective::{check_lambda, ObjectiveValue};
use crate::scheme::HashScheme;
use crate::stream::StreamPrefix;

/// Largest prefix the enumeration accepts (Bell(12) ≈ 4.2M partitions).
pub const BRUTE_FORCE_MAX_N: usize = 12;

/// Global optimum over all partitions into at most `b` blocks.
///
/// Partitions are enumerated as restricted-growth strings, so each unlabeled
/// partition is visited once; the first optimum in lexicographic order wins.
pub fn brute_force(prefix: &StreamPrefix, b: usize, lambda: f64) -> Result<(HashScheme, ObjectiveValue)> {
    check_lambda(lambda)?;
    if b == 0 {
        return Err(param("bucket count must be at least 1"));
    }
    let n = prefix.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::Size(format!("brute force supports n <= {BRUTE_FORCE_MAX_N}, got {n}")));
    }
    let freqs = prefix.freqs_f64();
    let dim = prefix.dim();
    let feats: Vec<&[f64]> = (0..n).map(|i| prefix.features(i)).collect();
    let sqn: Vec<f64> = feats.iter().map(|f| f.iter().map(|x| x * x).sum()).collect();

    let blocks_cap = b.min(n);
    let mut count = vec![0usize; blocks_cap];
    let mut fsum = vec![0.0; blocks_cap];
    let mut xsum = vec![0.0; blocks_cap * dim];
    let mut qsum = vec![0.0; blocks_cap];

    let mut best: Option<(Vec<usize>, ObjectiveValue)> = None;
    for_each_partition(n, blocks_cap, |rgs| {
        count.iter_mut().for_each(|c| *c = 0);
        fsum.iter_mut().for_each(|c| *c = 0.0);
        xsum.iter_mut().for_each(|c| *c = 0.0);
        qsum.iter_mut().for_each(|c| *c = 0.0);
        for i in 0..n {
            let j = rgs[i];
            count[j] += 1;
            fsum[j] += freqs[i];
            qsum[j] += sqn[i];
            for (acc, x) in xsum[j * dim..(j + 1) * dim].iter_mut().zip(feats[i]) {
                *acc += x;
            }
        }
        let mut est = 0.0;
        for i in 0..n {
            let j = rgs[i];
            est += (freqs[i] - fsum[j] / count[j] as f64).abs();
        }
        let mut sim = 0.0;
        for j in 0..blocks_cap {
            if count[j] > 0 {
                let s2: f64 = xsum[j * dim..(j + 1) * dim].iter().map(|x| x * x).sum();
                sim += (2.0 * count[j] as f64 * qsum[j] - 2.0 * s2).max(0.0);
            }
        }
        let value = ObjectiveValue::new(est, sim, lambda);
        if best.as_ref().is_none_or(|(_, v)| value.overall < v.overall) {
            best = Some((rgs.to_vec(), value));
        }
    });
    let (code, value) = best.expect("at least one partition");
    Ok((HashScheme::new(prefix, code, b)?, value))
}

/// Calls `visit` with every restricted-growth string of length `n` using at
/// most `max_blocks` distinct values, in lexicographic order.
fn for_each_partition(n: usize, max_blocks: usize, mut visit: impl FnMut(&[usize])) {
    if n == 0 || max_blocks == 0 {
        return;
    }
    let mut rgs = vec![0usize; n];
    // prefix_max[i] = max(rgs[..=i])
    let mut prefix_max = vec![0usize; n];
    loop {
        visit(&rgs);
        let mut i = n;
        loop {
            if i <= 1 {
                return;
            }
            i -= 1;
            let limit = (prefix_max[i - 1] + 1).min(max_blocks - 1);
            if rgs[i] < limit {
                rgs[i] += 1;
                prefix_max[i] = prefix_max[i - 1].max(rgs[i]);
                for t in i + 1..n {
                    rgs[t] = 0;
                    prefix_max[t] = prefix_max[i];
                }
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::evaluate_naive;
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

    fn bell(n: usize) -> usize {
        // Bell triangle.
        let mut row = vec![1usize];
        for _ in 1..n {
            let mut next = vec![*row.last().unwrap()];
            for &x in &row {
                next.push(next.last().unwrap() + x);
            }
            row = next;
        }
        *row.last().unwrap()
    }

    #[test]
    fn single_element() {
        let p = prefix(&[3], &[vec![1.0]]);
        let (s, v) = brute_force(&p, 4, 0.5).unwrap();
        assert_eq!(s.code(), &[0]);
        assert_eq!(v.overall, 0.0);
    }

    #[test]
    fn frequency_only_optimum() {
        let p = prefix(&[1, 2, 10], &[vec![0.0], vec![5.0], vec![9.0]]);
        let (s, v) = brute_force(&p, 2, 1.0).unwrap();
        assert_relative_eq!(v.overall, 1.0);
        assert_eq!(s.code(), &[0, 0, 1]);
    }

    #[test]
    fn similarity_only_respects_clusters() {
        let feats = vec![vec![0.0, 0.0], vec![10.0, 10.0], vec![0.5, 0.0], vec![10.0, 9.5], vec![0.0, 0.5]];
        let p = prefix(&[1, 1, 1, 1, 1], &feats);
        let (s, v) = brute_force(&p, 2, 0.0).unwrap();
        assert_eq!(s.code(), &[0, 1, 0, 1, 0]);
        assert_relative_eq!(v.overall, evaluate_naive(&s, &p, 0.0).unwrap().overall, max_relative = 1e-12);
    }

    #[test]
    fn rejects_large_inputs() {
        let freqs: Vec<u64> = vec![1; 13];
        let feats: Vec<Vec<f64>> = (0..13).map(|i| vec![i as f64]).collect();
        let p = prefix(&freqs, &feats);
        assert!(matches!(brute_force(&p, 2, 1.0), Err(Error::Size(_))));
    }

    #[test]
    fn enumerates_bell_many_partitions() {
        for n in 1..=9 {
            let mut seen = std::collections::BTreeSet::new();
            for_each_partition(n, n, |r| {
                seen.insert(r.to_vec());
            });
            assert_eq!(seen.len(), bell(n), "n = {n}");
        }
    }

    #[test]
    fn block_cap_counts_match_stirling_sums() {
        // S(5,1) + S(5,2) = 1 + 15; S(6,1..=3) = 1 + 31 + 90.
        let mut c = 0;
        for_each_partition(5, 2, |_| c += 1);
        assert_eq!(c, 16);
        c = 0;
        for_each_partition(6, 3, |r| {
            assert!(r.iter().all(|&x| x < 3));
            c += 1;
        });
        assert_eq!(c, 122);
    }
}
