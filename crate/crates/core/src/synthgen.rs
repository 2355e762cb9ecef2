//! Synthetic universes and streams, Zipfian streams, and a query-log loader.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::rng::{permutation, seeded, standard_normal};
use crate::stream::Element;

const UNIVERSE_STREAM: u64 = 100;
const ELIGIBLE_STREAM: u64 = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Number of groups `G`.
    pub groups: usize,
    /// Group `g` (1-based) has `2^(size_offset + g)` elements.
    pub size_offset: u32,
    pub dim: usize,
    /// Fraction of each group that may appear in the prefix, in `(0, 1]`.
    pub eligible_fraction: f64,
    pub seed: u64,
    /// Defaults to `10 · 2^G`.
    pub prefix_len: Option<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { groups: 6, size_offset: 2, dim: 2, eligible_fraction: 1.0, seed: 0, prefix_len: None }
    }
}

impl SynthConfig {
    pub fn group_size(&self, g: usize) -> usize {
        1usize << (self.size_offset as usize + g)
    }

    pub fn universe_size(&self) -> usize {
        (1..=self.groups).map(|g| self.group_size(g)).sum()
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix_len.unwrap_or(10 << self.groups)
    }

    /// Arrival probability of each group, proportional to `1/g`.
    pub fn group_probabilities(&self) -> Vec<f64> {
        let h: f64 = (1..=self.groups).map(|g| 1.0 / g as f64).sum();
        (1..=self.groups).map(|g| 1.0 / g as f64 / h).collect()
    }

    fn check(&self) -> Result<()> {
        if self.groups == 0 {
            return Err(param("need at least one group"));
        }
        if self.size_offset as usize + self.groups >= 40 {
            return Err(param("groups too large"));
        }
        if !(self.eligible_fraction > 0.0 && self.eligible_fraction <= 1.0) {
            return Err(param(format!("eligible fraction {} outside (0, 1]", self.eligible_fraction)));
        }
        Ok(())
    }
}

/// Generated elements with ids `0..|U|`, stored group by group.
#[derive(Debug, Clone, PartialEq)]
pub struct Universe {
    pub elements: Vec<Element>,
    /// 1-based group of each element.
    pub group_of: Vec<usize>,
    /// Index range of each group, in group order.
    pub groups: Vec<Range<usize>>,
    /// Per group, the element indices allowed in the prefix.
    pub eligible: Vec<Vec<usize>>,
    pub means: Vec<Vec<f64>>,
    group_weights: Vec<f64>,
}

impl Universe {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Element by id, since ids equal positions.
    pub fn element(&self, id: u64) -> Option<&Element> {
        self.elements.get(id as usize)
    }

    pub fn features(&self, id: u64) -> Option<&[f64]> {
        self.element(id).map(|e| e.features.as_slice())
    }
}

/// Draws group means uniformly from `[-10, 10]^p` and features from `N(μ_g, I)`.
pub fn gen_universe(cfg: &SynthConfig) -> Result<Universe> {
    cfg.check()?;
    let mut rng = seeded(cfg.seed, UNIVERSE_STREAM);
    let mut elements = Vec::with_capacity(cfg.universe_size());
    let mut group_of = Vec::with_capacity(cfg.universe_size());
    let mut groups = Vec::with_capacity(cfg.groups);
    let mut means = Vec::with_capacity(cfg.groups);
    for g in 1..=cfg.groups {
        let mu: Vec<f64> = (0..cfg.dim).map(|_| rng.gen_range(-10.0..=10.0)).collect();
        let start = elements.len();
        for _ in 0..cfg.group_size(g) {
            let x = mu.iter().map(|m| m + standard_normal(&mut rng)).collect();
            elements.push(Element::new(elements.len() as u64, x));
            group_of.push(g);
        }
        groups.push(start..elements.len());
        means.push(mu);
    }
    let mut pick = seeded(cfg.seed, ELIGIBLE_STREAM);
    let eligible = groups
        .iter()
        .map(|r| {
            let keep = (cfg.eligible_fraction * r.len() as f64).ceil() as usize;
            let mut order = permutation(&mut pick, r.len());
            order.truncate(keep.clamp(1, r.len()));
            order.into_iter().map(|k| r.start + k).collect()
        })
        .collect();
    Ok(Universe { elements, group_of, groups, eligible, means, group_weights: cfg.group_probabilities() })
}

/// Ids of `length` arrivals: a group with probability `∝ 1/g`, then a uniform
/// member of it, restricted to the eligible subset when `prefix_mode` is set.
pub fn gen_stream(universe: &Universe, length: usize, prefix_mode: bool, seed: u64) -> Result<Vec<u64>> {
    if length == 0 {
        return Err(param("stream length must be positive"));
    }
    let groups = WeightedIndex::new(&universe.group_weights).map_err(|e| param(e.to_string()))?;
    let mut rng = seeded(seed, 0);
    let mut out = Vec::with_capacity(length);
    for _ in 0..length {
        let g = groups.sample(&mut rng);
        let id = if prefix_mode {
            let pool = &universe.eligible[g];
            pool[rng.gen_range(0..pool.len())]
        } else {
            rng.gen_range(universe.groups[g].clone())
        };
        out.push(id as u64);
    }
    Ok(out)
}

/// Ids `0..num_elements` where id `r − 1` has probability `∝ r^(−s)`.
pub fn gen_zipf_stream(num_elements: usize, s: f64, length: usize, seed: u64) -> Result<Vec<u64>> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(param(format!("zipf exponent {s} must be positive")));
    }
    if num_elements == 0 {
        return Err(param("zipf universe must be non-empty"));
    }
    let weights: Vec<f64> = (1..=num_elements).map(|r| (r as f64).powf(-s)).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| param(e.to_string()))?;
    let mut rng = seeded(seed, 0);
    Ok((0..length).map(|_| dist.sample(&mut rng) as u64).collect())
}

/// How the day column of a query log is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DayColumn {
    /// An integer day number.
    Index,
    /// A timestamp whose date part (`YYYY-MM-DD`) names the day.
    Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogFormat {
    pub query_column: String,
    pub day_column: String,
    pub day: DayColumn,
    pub delimiter: u8,
}

impl Default for LogFormat {
    fn default() -> Self {
        LogFormat { query_column: "query".into(), day_column: "day".into(), day: DayColumn::Index, delimiter: b',' }
    }
}

impl LogFormat {
    /// Tab-separated `AnonID Query QueryTime ...` files.
    pub fn aol() -> Self {
        LogFormat { query_column: "Query".into(), day_column: "QueryTime".into(), day: DayColumn::Timestamp, delimiter: b'\t' }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryLog {
    /// Query text of each id.
    pub queries: Vec<String>,
    /// Arrivals per day, in day order.
    pub days: Vec<(String, Vec<u64>)>,
    pub skipped_rows: usize,
}

impl QueryLog {
    pub fn events(&self) -> impl Iterator<Item = u64> + '_ {
        self.days.iter().flat_map(|(_, ev)| ev.iter().copied())
    }

    pub fn total_events(&self) -> usize {
        self.days.iter().map(|(_, ev)| ev.len()).sum()
    }
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
enum DayKey {
    Index(i64),
    Date(String),
}

fn day_key(raw: &str, kind: DayColumn) -> Option<DayKey> {
    let raw = raw.trim();
    match kind {
        DayColumn::Index => raw.parse().ok().map(DayKey::Index),
        DayColumn::Timestamp => {
            let date = raw.split(|c: char| c == ' ' || c == 'T').next()?;
            let ok = date.len() == 10 && date.bytes().enumerate().all(|(i, c)| if i == 4 || i == 7 { c == b'-' } else { c.is_ascii_digit() });
            ok.then(|| DayKey::Date(date.to_owned()))
        }
    }
}

/// Reads a headed CSV query log. Queries get ids in order of first
/// appearance; rows with a missing column, an empty query or an unreadable
/// day are skipped and counted.
pub fn load_query_log(path: &Path, format: &LogFormat) -> Result<QueryLog> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .flexible(true)
        .quoting(format.delimiter != b'\t')
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Data(format!("{}: no column named {name:?}", path.display())))
    };
    let (qc, dc) = (column(&format.query_column)?, column(&format.day_column)?);

    let mut ids: HashMap<String, u64> = HashMap::new();
    let mut queries = Vec::new();
    let mut days: BTreeMap<DayKey, Vec<u64>> = BTreeMap::new();
    let mut skipped_rows = 0;
    for row in reader.records() {
        let Ok(row) = row else {
            skipped_rows += 1;
            continue;
        };
        let (Some(q), Some(d)) = (row.get(qc), row.get(dc)) else {
            skipped_rows += 1;
            continue;
        };
        let q = q.trim();
        let Some(key) = day_key(d, format.day).filter(|_| !q.is_empty()) else {
            skipped_rows += 1;
            continue;
        };
        let id = *ids.entry(q.to_owned()).or_insert_with(|| {
            queries.push(q.to_owned());
            queries.len() as u64 - 1
        });
        days.entry(key).or_default().push(id);
    }
    let days = days
        .into_iter()
        .map(|(k, ev)| {
            let name = match k {
                DayKey::Index(i) => i.to_string(),
                DayKey::Date(s) => s,
            };
            (name, ev)
        })
        .collect();
    Ok(QueryLog { queries, days, skipped_rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::io::Write;

    #[test]
    fn universe_sizes_follow_closed_form() {
        let cfg = SynthConfig { groups: 10, size_offset: 2, ..SynthConfig::default() };
        assert_eq!(cfg.universe_size(), 8184);
        let u = gen_universe(&cfg).unwrap();
        assert_eq!(u.len(), 8184);
        assert_eq!(u.groups[0].len(), 8);
        assert_eq!(u.groups[9].len(), 4096);
        let tiny = SynthConfig { groups: 1, size_offset: 0, ..SynthConfig::default() };
        assert_eq!(gen_universe(&tiny).unwrap().len(), 2);
        assert_eq!(SynthConfig { groups: 6, ..SynthConfig::default() }.prefix_len(), 640);
    }

    #[test]
    fn universe_is_deterministic_and_clustered() {
        let cfg = SynthConfig { groups: 4, seed: 9, ..SynthConfig::default() };
        let a = gen_universe(&cfg).unwrap();
        assert_eq!(a, gen_universe(&cfg).unwrap());
        assert_ne!(a.elements, gen_universe(&SynthConfig { seed: 10, ..cfg.clone() }).unwrap().elements);
        for (g, r) in a.groups.iter().enumerate() {
            for d in 0..cfg.dim {
                let m: f64 = a.elements[r.clone()].iter().map(|e| e.features[d]).sum::<f64>() / r.len() as f64;
                assert!((m - a.means[g][d]).abs() < 4.0 / (r.len() as f64).sqrt() + 0.5);
                assert!(a.means[g][d].abs() <= 10.0);
            }
        }
    }

    #[test]
    fn group_frequencies_follow_inverse_rank() {
        let cfg = SynthConfig { groups: 2, size_offset: 2, ..SynthConfig::default() };
        let u = gen_universe(&cfg).unwrap();
        assert_eq!((u.groups[0].len(), u.groups[1].len()), (8, 16));
        let s = gen_stream(&u, 100_000, false, 4).unwrap();
        let frac = s.iter().filter(|&&id| u.group_of[id as usize] == 1).count() as f64 / s.len() as f64;
        assert!((frac - 2.0 / 3.0).abs() < 0.01, "{frac}");
    }

    #[test]
    fn prefix_mode_restricts_support() {
        let cfg = SynthConfig { groups: 10, eligible_fraction: 0.5, ..SynthConfig::default() };
        let u = gen_universe(&cfg).unwrap();
        let s = gen_stream(&u, cfg.prefix_len(), true, 1).unwrap();
        let distinct: HashSet<u64> = s.iter().copied().collect();
        assert!(distinct.len() <= 4096);
        let allowed: HashSet<u64> = u.eligible.iter().flatten().map(|&i| i as u64).collect();
        assert!(distinct.is_subset(&allowed));

        let full = SynthConfig { groups: 3, eligible_fraction: 1.0, ..SynthConfig::default() };
        let u = gen_universe(&full).unwrap();
        for (pool, r) in u.eligible.iter().zip(&u.groups) {
            let mut p = pool.clone();
            p.sort_unstable();
            assert_eq!(p, r.clone().collect::<Vec<_>>());
        }
    }

    #[test]
    fn zipf_head_mass() {
        let s = gen_zipf_stream(10_000, 1.0, 1_000_000, 3).unwrap();
        let h: f64 = (1..=10_000).map(|r| 1.0 / r as f64).sum();
        let top = s.iter().filter(|&&id| id == 0).count() as f64 / s.len() as f64;
        assert!((top - 1.0 / h).abs() < 0.01, "{top} vs {}", 1.0 / h);
        assert_eq!(s[..100], gen_zipf_stream(10_000, 1.0, 100, 3).unwrap()[..]);
        let steep = gen_zipf_stream(100, 20.0, 1000, 0).unwrap();
        assert!(steep.iter().filter(|&&id| id == 0).count() > 990);
        assert!(gen_zipf_stream(10, 0.0, 5, 0).is_err());
    }

    #[test]
    fn query_log_ids_days_and_skips() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "id,query,day").unwrap();
        writeln!(f, "1,sharon stone,2").unwrap();
        writeln!(f, "2,google,1").unwrap();
        writeln!(f, "3,sharon stone,1").unwrap();
        writeln!(f, "4,,1").unwrap();
        writeln!(f, "5,broken").unwrap();
        writeln!(f, "6,weather,notaday").unwrap();
        f.flush().unwrap();
        let log = load_query_log(f.path(), &LogFormat::default()).unwrap();
        assert_eq!(log.queries, ["sharon stone", "google"]);
        assert_eq!(log.days, vec![("1".to_string(), vec![1, 0]), ("2".to_string(), vec![0])]);
        assert_eq!(log.skipped_rows, 3);
        assert_eq!(log.total_events(), 3);
    }

    #[test]
    fn aol_style_timestamps() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "AnonID\tQuery\tQueryTime\tItemRank\tClickURL").unwrap();
        writeln!(f, "142\twww.google.com\t2006-03-01 07:17:12\t\t").unwrap();
        writeln!(f, "142\t\"quoted\" thing\t2006-03-02 10:00:00\t1\thttp://x").unwrap();
        writeln!(f, "217\twww.google.com\t2006-03-02 11:00:00\t\t").unwrap();
        f.flush().unwrap();
        let log = load_query_log(f.path(), &LogFormat::aol()).unwrap();
        assert_eq!(log.queries, ["www.google.com", "\"quoted\" thing"]);
        assert_eq!(log.days.len(), 2);
        assert_eq!(log.days[1], ("2006-03-02".to_string(), vec![1, 0]));
        assert!(matches!(load_query_log(Path::new("/nonexistent/x.csv"), &LogFormat::default()), Err(Error::Csv(_) | Error::Io(_))));
    }
}
