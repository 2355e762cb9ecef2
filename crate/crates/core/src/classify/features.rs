use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vocabulary size used when none is given.
pub const DEFAULT_VOCABULARY: usize = 500;

/// Number of character counts appended after the word counts.
pub const EXTRA_FEATURES: usize = 4;

/// Lowercases, turns ASCII punctuation into separators and splits on whitespace.
pub fn tokenize(query: &str) -> Vec<String> {
    query
        .to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_punctuation() { ' ' } else { c })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

/// Bag-of-words over a fixed vocabulary plus four character counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vocabulary", into = "Vocabulary")]
pub struct FeaturePipeline {
    vocabulary: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct Vocabulary {
    vocabulary: Vec<String>,
}

impl From<Vocabulary> for FeaturePipeline {
    fn from(v: Vocabulary) -> Self {
        FeaturePipeline::with_vocabulary(v.vocabulary)
    }
}

impl From<FeaturePipeline> for Vocabulary {
    fn from(p: FeaturePipeline) -> Self {
        Vocabulary { vocabulary: p.vocabulary }
    }
}

impl FeaturePipeline {
    pub fn with_vocabulary(vocabulary: Vec<String>) -> Self {
        let index = vocabulary.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        FeaturePipeline { vocabulary, index }
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len() + EXTRA_FEATURES
    }

    pub fn transform(&self, query: &str) -> Vec<f64> {
        let v = self.vocabulary.len();
        let mut out = vec![0.0; v + EXTRA_FEATURES];
        for tok in tokenize(query) {
            if let Some(&i) = self.index.get(&tok) {
                out[i] += 1.0;
            }
        }
        for c in query.chars() {
            if c.is_ascii() {
                out[v] += 1.0;
            }
            if c.is_ascii_punctuation() {
                out[v + 1] += 1.0;
            }
            if c == '.' {
                out[v + 2] += 1.0;
            }
            if c.is_whitespace() {
                out[v + 3] += 1.0;
            }
        }
        out
    }
}

/// Keeps the `vocabulary` most frequent tokens, ties broken lexicographically.
pub fn fit_pipeline<'a, I>(queries: I, vocabulary: usize) -> Result<FeaturePipeline>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut any = false;
    for q in queries {
        any = true;
        for tok in tokenize(q) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    if !any {
        return Err(Error::Data("cannot fit features on an empty corpus".into()));
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(vocabulary);
    Ok(FeaturePipeline::with_vocabulary(ranked.into_iter().map(|(w, _)| w).collect()))
}
