//! Elements, stream prefixes, and the flat stream/element-table file formats.
//!
//! Both file formats are one record per line, `id,feat_1,...,feat_p`, in plain
//! decimal text without a header. A stream file has one line per arrival; an
//! element table has one line per distinct id.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A universe member: unique key plus a fixed-length feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: u64,
    pub features: Vec<f64>,
}

impl Element {
    pub fn new(id: u64, features: Vec<f64>) -> Self {
        Self { id, features }
    }
}

/// The observed stream prefix: arrivals, exact per-id counts and the distinct
/// elements seen, in first-appearance order.
///
/// Position `i` (used by [`crate::HashScheme`] and the solvers) refers to the
/// `i`-th distinct element in order of first appearance.
#[derive(Debug, Clone)]
pub struct StreamPrefix {
    events: Vec<u64>,
    elements: Vec<Element>,
    freq: Vec<u64>,
    index: HashMap<u64, usize>,
    dim: usize,
}

/// Builds a [`StreamPrefix`] from `(id, features)` arrivals.
pub fn ingest_prefix<I, F>(events: I) -> Result<StreamPrefix>
where
    I: IntoIterator<Item = (u64, F)>,
    F: AsRef<[f64]>,
{
    let mut prefix = StreamPrefix {
        events: Vec::new(),
        elements: Vec::new(),
        freq: Vec::new(),
        index: HashMap::new(),
        dim: 0,
    };
    for (id, feat) in events {
        let feat = feat.as_ref();
        if prefix.events.is_empty() {
            prefix.dim = feat.len();
        } else if feat.len() != prefix.dim {
            return Err(Error::Dimension { expected: prefix.dim, found: feat.len() });
        }
        match prefix.index.get(&id) {
            Some(&pos) => {
                if prefix.elements[pos].features.as_slice() != feat {
                    return Err(Error::Data(format!("id {id} re-appears with different features")));
                }
                prefix.freq[pos] += 1;
            }
            None => {
                prefix.index.insert(id, prefix.elements.len());
                prefix.elements.push(Element::new(id, feat.to_vec()));
                prefix.freq.push(1);
            }
        }
        prefix.events.push(id);
    }
    if prefix.events.is_empty() {
        return Err(Error::EmptyPrefix);
    }
    Ok(prefix)
}

impl StreamPrefix {
    /// Ingests a stream of ids whose features live in a lookup table.
    pub fn from_ids<'a, L>(ids: &[u64], lookup: L) -> Result<Self>
    where
        L: Fn(u64) -> Option<&'a [f64]>,
    {
        let mut events = Vec::with_capacity(ids.len());
        for &id in ids {
            let feat = lookup(id).ok_or_else(|| Error::Data(format!("id {id} missing from element table")))?;
            events.push((id, feat));
        }
        ingest_prefix(events)
    }

    /// Number of distinct elements `n`.
    pub fn n(&self) -> usize {
        self.elements.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn events(&self) -> &[u64] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// Prefix frequencies aligned with [`Self::elements`].
    pub fn freqs(&self) -> &[u64] {
        &self.freq
    }

    pub fn freqs_f64(&self) -> Vec<f64> {
        self.freq.iter().map(|&f| f as f64).collect()
    }

    pub fn position(&self, id: u64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn freq_of(&self, id: u64) -> u64 {
        self.position(id).map_or(0, |i| self.freq[i])
    }

    pub fn contains(&self, id: u64) -> bool {
        self.index.contains_key(&id)
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.elements[i].features
    }

    /// Restricts the prefix to `keep`, dropping arrivals of all other ids.
    pub fn restrict(&self, keep: &[u64]) -> Result<StreamPrefix> {
        let keep: std::collections::HashSet<u64> = keep.iter().copied().collect();
        let events = self
            .events
            .iter()
            .filter(|id| keep.contains(id))
            .map(|&id| (id, self.elements[self.index[&id]].features.as_slice()));
        ingest_prefix(events)
    }
}

fn parse_record(path: &Path, line_no: usize, line: &str) -> Result<(u64, Vec<f64>)> {
    let mut fields = line.split(',');
    let bad = |msg: String| Error::Parse { path: path.to_path_buf(), line: line_no, msg };
    let id_field = fields.next().unwrap_or("").trim();
    let id = id_field.parse::<u64>().map_err(|e| bad(format!("bad id {id_field:?}: {e}")))?;
    let features = fields
        .map(|f| f.trim().parse::<f64>().map_err(|e| bad(format!("bad feature {f:?}: {e}"))))
        .collect::<Result<Vec<f64>>>()?;
    Ok((id, features))
}

/// Reads a stream or element-table file.
pub fn read_records(path: &Path) -> Result<Vec<(u64, Vec<f64>)>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    let mut dim = None;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record(path, n + 1, &line)?;
        match dim {
            None => dim = Some(rec.1.len()),
            Some(d) if d != rec.1.len() => return Err(Error::Dimension { expected: d, found: rec.1.len() }),
            _ => {}
        }
        out.push(rec);
    }
    Ok(out)
}

/// Formats one `id,feat_1,...,feat_p` record (without newline).
pub fn format_record(id: u64, features: &[f64]) -> String {
    let mut s = id.to_string();
    for f in features {
        let _ = write!(s, ",{f}");
    }
    s
}

/// Writes records in the stream/element-table format.
pub fn write_records<'a, I>(path: &Path, records: I) -> Result<()>
where
    I: IntoIterator<Item = (u64, &'a [f64])>,
{
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (id, feat) in records {
        writeln!(w, "{}", format_record(id, feat))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn counts_distinct_ids() {
        let p = ingest_prefix(vec![(1, vec![0.0]), (1, vec![0.0]), (2, vec![1.0])]).unwrap();
        assert_eq!(p.n(), 2);
        assert_eq!(p.freq_of(1), 2);
        assert_eq!(p.freq_of(2), 1);
        assert_eq!(p.freq_of(3), 0);
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn empty_prefix_is_an_error() {
        let r = ingest_prefix(Vec::<(u64, Vec<f64>)>::new());
        assert!(matches!(r, Err(Error::EmptyPrefix)));
    }

    #[test]
    fn inconsistent_dimension_is_an_error() {
        let r = ingest_prefix(vec![(1, vec![0.0]), (2, vec![1.0, 2.0])]);
        assert!(matches!(r, Err(Error::Dimension { expected: 1, found: 2 })));
    }

    #[test]
    fn conflicting_features_are_rejected() {
        let r = ingest_prefix(vec![(1, vec![0.0]), (1, vec![1.0])]);
        assert!(matches!(r, Err(Error::Data(_))));
    }

    #[test]
    fn restrict_keeps_only_selected_arrivals() {
        let p = ingest_prefix(vec![(1, vec![]), (2, vec![]), (1, vec![]), (3, vec![])]).unwrap();
        let q = p.restrict(&[1, 3]).unwrap();
        assert_eq!(q.events(), &[1, 1, 3]);
        assert_eq!(q.freq_of(1), 2);
        assert!(!q.contains(2));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let recs = vec![(4u64, vec![0.5, -1.25]), (9, vec![3.0, 1e-3])];
        write_records(&path, recs.iter().map(|(i, f)| (*i, f.as_slice()))).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "4,0.5,-1.25\n9,3,0.001\n");
        assert_eq!(read_records(&path).unwrap(), recs);
    }

    #[test]
    fn malformed_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        fs::write(&path, "1,2\nx,3\n").unwrap();
        assert!(matches!(read_records(&path), Err(Error::Parse { line: 2, .. })));
    }

    proptest! {
        #[test]
        fn frequencies_sum_to_stream_length(ids in proptest::collection::vec(0u64..20, 1..200)) {
            let p = ingest_prefix(ids.iter().map(|&i| (i, [i as f64]))).unwrap();
            prop_assert_eq!(p.freqs().iter().sum::<u64>() as usize, ids.len());
            prop_assert!(p.freqs().iter().all(|&f| f >= 1));
        }
    }
}
