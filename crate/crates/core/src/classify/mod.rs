//! Routing of unseen elements to buckets by their features.

mod centroid;
mod features;
mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use centroid::NearestCentroid;
pub use features::{fit_pipeline, tokenize, FeaturePipeline, DEFAULT_VOCABULARY, EXTRA_FEATURES};
pub use tree::DecisionTree;

use crate::error::{param, Error, Result};
use crate::rng::{permutation, seeded};
use crate::scheme::{validate_scheme, HashScheme};
use crate::stream::{Element, StreamPrefix};

/// Multi-class classifier over dense feature vectors.
pub trait Classifier {
    /// Fits on rows `x` with labels in `0..n_classes`.
    fn fit(&mut self, x: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Result<()>;
    /// Label in `0..n_classes`; errors if not fitted.
    fn predict(&self, features: &[f64]) -> Result<usize>;
    /// Class count fixed at fit time, 0 before.
    fn n_classes(&self) -> usize;
}

pub(crate) fn check_fit_input(x: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::Data("no training rows".into()));
    }
    if x.len() != labels.len() {
        return Err(Error::Mismatch(format!("{} rows but {} labels", x.len(), labels.len())));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(param(format!("label {y} outside 0..{n_classes}")));
    }
    let dim = x[0].len();
    if let Some(row) = x.iter().find(|r| r.len() != dim) {
        return Err(Error::Dimension { expected: dim, found: row.len() });
    }
    Ok(dim)
}

/// Fraction of rows predicted correctly.
pub fn accuracy(clf: &dyn Classifier, x: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if x.is_empty() {
        return Ok(1.0);
    }
    let mut hit = 0usize;
    for (row, &y) in x.iter().zip(labels) {
        hit += usize::from(clf.predict(row)? == y);
    }
    Ok(hit as f64 / x.len() as f64)
}

/// Always predicts one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantClassifier {
    pub label: usize,
    pub n_classes: usize,
}

impl Classifier for ConstantClassifier {
    fn fit(&mut self, x: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Result<()> {
        check_fit_input(x, labels, n_classes)?;
        let mut counts = vec![0usize; n_classes];
        for &y in labels {
            counts[y] += 1;
        }
        self.label = (0..n_classes).fold(0, |b, c| if counts[c] > counts[b] { c } else { b });
        self.n_classes = n_classes;
        Ok(())
    }

    fn predict(&self, _: &[f64]) -> Result<usize> {
        if self.n_classes == 0 {
            return Err(Error::State("constant classifier is not fitted".into()));
        }
        Ok(self.label)
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }
}

/// A fitted model of any supported kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BucketModel {
    Tree(DecisionTree),
    Centroid(NearestCentroid),
    Constant(ConstantClassifier),
}

impl BucketModel {
    fn inner(&self) -> &dyn Classifier {
        match self {
            BucketModel::Tree(t) => t,
            BucketModel::Centroid(c) => c,
            BucketModel::Constant(c) => c,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Classifier {
        match self {
            BucketModel::Tree(t) => t,
            BucketModel::Centroid(c) => c,
            BucketModel::Constant(c) => c,
        }
    }
}

impl Classifier for BucketModel {
    fn fit(&mut self, x: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Result<()> {
        self.inner_mut().fit(x, labels, n_classes)
    }

    fn predict(&self, features: &[f64]) -> Result<usize> {
        self.inner().predict(features)
    }

    fn n_classes(&self) -> usize {
        self.inner().n_classes()
    }
}

const MODEL_MAGIC: &str = "OPTHASH-CLASSIFIER v1";

impl BucketModel {
    pub fn to_text(&self) -> Result<String> {
        Ok(format!("{MODEL_MAGIC}\n{}\n", serde_json::to_string(self)?))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let body = text
            .strip_prefix(MODEL_MAGIC)
            .and_then(|r| r.strip_prefix('\n'))
            .ok_or_else(|| Error::Format(format!("missing {MODEL_MAGIC:?} header")))?;
        Ok(serde_json::from_str(body)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Which classifier to train.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Tree { max_depth: Option<usize>, min_impurity_decrease: f64 },
    /// Tree with depth and impurity threshold picked on the holdout split.
    #[default]
    TunedTree,
    Centroid,
    Constant,
}

impl std::str::FromStr for ClassifierSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree" | "tuned-tree" => Ok(ClassifierSpec::TunedTree),
            "full-tree" => Ok(ClassifierSpec::Tree { max_depth: None, min_impurity_decrease: 0.0 }),
            "centroid" => Ok(ClassifierSpec::Centroid),
            "constant" => Ok(ClassifierSpec::Constant),
            _ => Err(param(format!("unknown classifier {s:?}"))),
        }
    }
}

pub const DEPTH_GRID: [Option<usize>; 4] = [Some(4), Some(8), Some(16), None];
pub const IMPURITY_GRID: [f64; 3] = [0.0, 1e-4, 1e-3];

fn untrained(spec: &ClassifierSpec) -> BucketModel {
    match *spec {
        ClassifierSpec::Tree { max_depth, min_impurity_decrease } => {
            BucketModel::Tree(DecisionTree::new(max_depth, min_impurity_decrease))
        }
        ClassifierSpec::TunedTree => BucketModel::Tree(DecisionTree::new(None, 0.0)),
        ClassifierSpec::Centroid => BucketModel::Centroid(NearestCentroid::new()),
        ClassifierSpec::Constant => BucketModel::Constant(ConstantClassifier { label: 0, n_classes: 0 }),
    }
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub model: BucketModel,
    /// Accuracy on the held-out rows of a model fitted on the rest; `None`
    /// when there are too few rows to hold any out.
    pub holdout_accuracy: Option<f64>,
    /// Accuracy of the final model, refitted on all rows, on those rows.
    pub train_accuracy: f64,
}

/// Seeded split of `0..n` into (train, holdout).
pub fn holdout_split(n: usize, holdout_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let k = ((n as f64 * holdout_fraction).round() as usize).min(n.saturating_sub(1));
    let mut order = permutation(&mut seeded(seed, 11), n);
    let train = order.split_off(k);
    (train, order)
}

/// Trains a bucket classifier on `(features, bucket)` pairs of the prefix.
///
/// The model is first fitted on a seeded training split and scored on the
/// held-out rows, then refitted on every row. If all rows share one bucket
/// a constant model is returned regardless of `spec`.
pub fn train_bucket_classifier(
    prefix: &StreamPrefix,
    scheme: &HashScheme,
    spec: &ClassifierSpec,
    holdout_fraction: f64,
    seed: u64,
) -> Result<TrainedClassifier> {
    if !validate_scheme(scheme, prefix) {
        return Err(Error::Mismatch("scheme does not cover the prefix".into()));
    }
    if !(0.0..1.0).contains(&holdout_fraction) {
        return Err(param(format!("holdout fraction {holdout_fraction} outside [0, 1)")));
    }
    let x: Vec<Vec<f64>> = (0..prefix.n()).map(|i| prefix.features(i).to_vec()).collect();
    let y: Vec<usize> = prefix.elements().iter().map(|e| scheme.bucket_of(e.id).expect("validated")).collect();
    let b = scheme.b();
    if y.iter().all(|&l| l == y[0]) {
        let model = BucketModel::Constant(ConstantClassifier { label: y[0], n_classes: b });
        return Ok(TrainedClassifier { model, holdout_accuracy: Some(1.0), train_accuracy: 1.0 });
    }

    let (tr, ho) = holdout_split(x.len(), holdout_fraction, seed);
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (idx.iter().map(|&i| x[i].clone()).collect(), idx.iter().map(|&i| y[i]).collect())
    };
    let (xt, yt) = pick(&tr);
    let (xh, yh) = pick(&ho);

    let candidates: Vec<ClassifierSpec> = match spec {
        ClassifierSpec::TunedTree => DEPTH_GRID
            .iter()
            .flat_map(|&d| IMPURITY_GRID.iter().map(move |&m| ClassifierSpec::Tree { max_depth: d, min_impurity_decrease: m }))
            .collect(),
        other => vec![other.clone()],
    };
    // Bucket means over the training split, used to break accuracy ties:
    // with many near-singleton buckets accuracy is uninformative, while the
    // error of estimating a held-out id by its routed bucket is not.
    let f = prefix.freqs_f64();
    let mut sum = vec![0.0; b];
    let mut cnt = vec![0usize; b];
    for &i in &tr {
        sum[y[i]] += f[i];
        cnt[y[i]] += 1;
    }
    let mut best: Option<(ClassifierSpec, Option<f64>, f64)> = None;
    for cand in candidates {
        let mut model = untrained(&cand);
        model.fit(&xt, &yt, b)?;
        let score = if xh.is_empty() { None } else { Some(accuracy(&model, &xh, &yh)?) };
        let mut est_err = 0.0;
        for &i in &ho {
            let j = model.predict(&x[i])?;
            let mu = if cnt[j] == 0 { 0.0 } else { sum[j] / cnt[j] as f64 };
            est_err += (f[i] - mu).abs();
        }
        let better = match &best {
            None => true,
            Some((_, s, e)) => {
                let (a, s) = (score.unwrap_or(0.0), s.unwrap_or(0.0));
                a > s + 1e-12 || ((a - s).abs() <= 1e-12 && est_err < *e)
            }
        };
        if better {
            best = Some((cand, score, est_err));
        }
    }
    let (chosen, holdout_accuracy, _) = best.expect("at least one candidate");
    let mut model = untrained(&chosen);
    model.fit(&x, &y, b)?;
    let train_accuracy = accuracy(&model, &x, &y)?;
    Ok(TrainedClassifier { model, holdout_accuracy, train_accuracy })
}

/// Bucket for an element according to a fitted classifier.
pub fn predict_bucket(clf: &dyn Classifier, element: &Element) -> Result<usize> {
    clf.predict(&element.features)
}
