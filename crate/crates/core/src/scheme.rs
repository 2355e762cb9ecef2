use std::collections::HashMap;

use crate::error::{param, Result};
use crate::stream::StreamPrefix;

/// Assignment of the `n` prefix elements to `b` buckets.
///
/// `code[i]` is the bucket of the prefix element at position `i`; `ids[i]` is
/// its key. Empty buckets are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct HashScheme {
    code: Vec<usize>,
    b: usize,
    ids: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl HashScheme {
    /// Scheme over the elements of `prefix`, in prefix position order.
    pub fn new(prefix: &StreamPrefix, code: Vec<usize>, b: usize) -> Result<Self> {
        if code.len() != prefix.n() {
            return Err(param(format!("code has {} entries but prefix has {} elements", code.len(), prefix.n())));
        }
        let ids = prefix.elements().iter().map(|e| e.id).collect();
        Self::from_parts(ids, code, b)
    }

    /// Scheme from explicit ids and codes. Codes are not range-checked here;
    /// use [`validate_scheme`] for that.
    pub fn from_parts(ids: Vec<u64>, code: Vec<usize>, b: usize) -> Result<Self> {
        if ids.len() != code.len() {
            return Err(param("ids and code lengths differ"));
        }
        let index = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        Ok(Self { code, b, ids, index })
    }

    pub fn code(&self) -> &[usize] {
        &self.code
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn n(&self) -> usize {
        self.code.len()
    }

    pub fn bucket_of(&self, id: u64) -> Option<usize> {
        self.index.get(&id).map(|&i| self.code[i])
    }

    /// Member positions of every bucket.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.b];
        for (i, &j) in self.code.iter().enumerate() {
            if j < self.b {
                out[j].push(i);
            }
        }
        out
    }

    pub fn counts(&self) -> Vec<usize> {
        self.members().iter().map(Vec::len).collect()
    }

    /// Row-per-element one-hot matrix `Z`.
    pub fn one_hot(&self) -> Vec<Vec<u8>> {
        self.code
            .iter()
            .map(|&j| {
                let mut row = vec![0u8; self.b];
                if j < self.b {
                    row[j] = 1;
                }
                row
            })
            .collect()
    }

    /// Inverse of [`Self::one_hot`]; every row must contain exactly one 1.
    pub fn from_one_hot(ids: Vec<u64>, z: &[Vec<u8>]) -> Result<Self> {
        let b = z.first().map_or(0, Vec::len);
        let mut code = Vec::with_capacity(z.len());
        for (i, row) in z.iter().enumerate() {
            if row.len() != b || row.iter().map(|&v| v as usize).sum::<usize>() != 1 || row.iter().any(|&v| v > 1) {
                return Err(param(format!("row {i} of Z is not one-hot")));
            }
            code.push(row.iter().position(|&v| v == 1).unwrap());
        }
        Self::from_parts(ids, code, b)
    }
}

/// True iff `scheme` is a complete, in-range assignment of `prefix`'s universe.
pub fn validate_scheme(scheme: &HashScheme, prefix: &StreamPrefix) -> bool {
    scheme.code.len() == prefix.n()
        && scheme.code.iter().all(|&j| j < scheme.b)
        && scheme.index.len() == prefix.n()
        && prefix.elements().iter().all(|e| scheme.index.contains_key(&e.id))
}
