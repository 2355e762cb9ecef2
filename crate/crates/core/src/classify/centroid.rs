use serde::{Deserialize, Serialize};

use super::{check_fit_input, Classifier};
use crate::error::{Error, Result};

/// Predicts the class whose training mean is nearest in squared Euclidean
/// distance. Classes without training points are never predicted; ties go to
/// the lowest class index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NearestCentroid {
    n_classes: usize,
    centroids: Vec<Option<Vec<f64>>>,
}

impl NearestCentroid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_centroids(centroids: Vec<Option<Vec<f64>>>) -> Self {
        NearestCentroid { n_classes: centroids.len(), centroids }
    }

    pub fn centroids(&self) -> &[Option<Vec<f64>>] {
        &self.centroids
    }
}

impl Classifier for NearestCentroid {
    fn fit(&mut self, x: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Result<()> {
        let dim = check_fit_input(x, labels, n_classes)?;
        let mut sums = vec![vec![0.0; dim]; n_classes];
        let mut counts = vec![0usize; n_classes];
        for (row, &y) in x.iter().zip(labels) {
            counts[y] += 1;
            for (s, v) in sums[y].iter_mut().zip(row) {
                *s += v;
            }
        }
        self.n_classes = n_classes;
        self.centroids = sums
            .into_iter()
            .zip(counts)
            .map(|(s, c)| (c > 0).then(|| s.into_iter().map(|v| v / c as f64).collect()))
            .collect();
        Ok(())
    }

    fn predict(&self, features: &[f64]) -> Result<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (c, centroid) in self.centroids.iter().enumerate() {
            let Some(mu) = centroid else { continue };
            if mu.len() != features.len() {
                return Err(Error::Dimension { expected: mu.len(), found: features.len() });
            }
            let d: f64 = mu.iter().zip(features).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((c, d));
            }
        }
        best.map(|(c, _)| c).ok_or_else(|| Error::State("nearest-centroid classifier is not fitted".into()))
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }
}
