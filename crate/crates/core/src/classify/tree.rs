use serde::{Deserialize, Serialize};

use super::{check_fit_input, Classifier};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { label: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// CART classifier with Gini impurity.
///
/// A node is split when it is impure, above the depth limit, and the best
/// axis-aligned split lowers the sample-weighted impurity by at least
/// `min_impurity_decrease` (measured as a fraction of the whole training set,
/// as in the usual CART convention). Leaves predict their majority label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub max_depth: Option<usize>,
    pub min_impurity_decrease: f64,
    n_classes: usize,
    dim: usize,
    nodes: Vec<Node>,
}

struct Split {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

fn gini_num(counts_sq: f64, m: f64) -> f64 {
    // m · gini = m − Σ c² / m
    m - counts_sq / m
}

impl DecisionTree {
    pub fn new(max_depth: Option<usize>, min_impurity_decrease: f64) -> Self {
        DecisionTree { max_depth, min_impurity_decrease, n_classes: 0, dim: 0, nodes: Vec::new() }
    }

    /// Depth of the fitted tree; a lone leaf has depth 0.
    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            go(&self.nodes, 0)
        }
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    fn majority(&self, labels: &[usize], idx: &[usize]) -> usize {
        let mut counts = vec![0usize; self.n_classes];
        for &i in idx {
            counts[labels[i]] += 1;
        }
        let mut best = 0;
        for (c, &k) in counts.iter().enumerate() {
            if k > counts[best] {
                best = c;
            }
        }
        best
    }

    fn best_split(&self, x: &[Vec<f64>], labels: &[usize], idx: &[usize], total: f64) -> Option<Split> {
        let m = idx.len() as f64;
        let mut parent = vec![0f64; self.n_classes];
        for &i in idx {
            parent[labels[i]] += 1.0;
        }
        let parent_sq: f64 = parent.iter().map(|c| c * c).sum();
        let parent_num = gini_num(parent_sq, m);

        let mut best: Option<Split> = None;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(idx.len());
        let mut left = vec![0f64; self.n_classes];
        for feature in 0..self.dim {
            let first = x[idx[0]][feature];
            if idx.iter().all(|&i| x[i][feature] == first) {
                continue;
            }
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (x[i][feature], labels[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            left.iter_mut().for_each(|c| *c = 0.0);
            let (mut lsq, mut rsq) = (0.0, parent_sq);
            for s in 0..pairs.len() - 1 {
                let y = pairs[s].1;
                lsq += 2.0 * left[y] + 1.0;
                let right_y = parent[y] - left[y];
                rsq -= 2.0 * right_y - 1.0;
                left[y] += 1.0;
                if pairs[s].0 == pairs[s + 1].0 {
                    continue;
                }
                let ml = (s + 1) as f64;
                let mr = m - ml;
                let children = gini_num(lsq, ml) + gini_num(rsq, mr);
                let decrease = (parent_num - children) / total;
                if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                    let threshold = pairs[s].0 + (pairs[s + 1].0 - pairs[s].0) / 2.0;
                    // Midpoint may round up to the right value for adjacent floats.
                    let threshold = if threshold >= pairs[s + 1].0 { pairs[s].0 } else { threshold };
                    best = Some(Split { feature, threshold, decrease });
                }
            }
        }
        best
    }

    fn grow(&mut self, x: &[Vec<f64>], labels: &[usize], idx: Vec<usize>, depth: usize, total: f64) -> usize {
        let at = self.nodes.len();
        let label = self.majority(labels, &idx);
        self.nodes.push(Node::Leaf { label });
        let pure = idx.iter().all(|&i| labels[i] == labels[idx[0]]);
        if pure || self.max_depth.is_some_and(|d| depth >= d) {
            return at;
        }
        let Some(split) = self.best_split(x, labels, &idx, total) else {
            return at;
        };
        if split.decrease < self.min_impurity_decrease - 1e-15 {
            return at;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| x[i][split.feature] <= split.threshold);
        let left = self.grow(x, labels, l, depth + 1, total);
        let right = self.grow(x, labels, r, depth + 1, total);
        self.nodes[at] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        at
    }
}

impl Classifier for DecisionTree {
    fn fit(&mut self, x: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Result<()> {
        self.dim = check_fit_input(x, labels, n_classes)?;
        self.n_classes = n_classes;
        self.nodes.clear();
        let total = x.len() as f64;
        self.grow(x, labels, (0..x.len()).collect(), 0, total);
        Ok(())
    }

    fn predict(&self, features: &[f64]) -> Result<usize> {
        if self.nodes.is_empty() {
            return Err(Error::State("decision tree is not fitted".into()));
        }
        if features.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, found: features.len() });
        }
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { label } => return Ok(label),
                Node::Split { feature, threshold, left, right } => {
                    at = if features[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::accuracy;
    use proptest::prelude::*;

    #[test]
    fn xor_is_fitted_exactly_without_depth_limit() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = vec![0, 0, 1, 1];
        let mut t = DecisionTree::new(None, 0.0);
        t.fit(&x, &y, 2).unwrap();
        assert_eq!(accuracy(&t, &x, &y).unwrap(), 1.0);
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn depth_limit_is_respected() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..64).map(|i| i % 2).collect();
        let mut t = DecisionTree::new(Some(3), 0.0);
        t.fit(&x, &y, 2).unwrap();
        assert!(t.depth() <= 3);
        assert!(t.leaves() <= 8);
    }

    #[test]
    fn duplicate_points_with_conflicting_labels() {
        let x = vec![vec![1.0], vec![1.0]];
        let y = vec![0, 1];
        let mut t = DecisionTree::new(None, 0.0);
        t.fit(&x, &y, 2).unwrap();
        assert!(accuracy(&t, &x, &y).unwrap() <= 0.5);
        assert_eq!(t.predict(&[1.0]).unwrap(), 0);
    }

    #[test]
    fn impurity_threshold_prunes() {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..100).map(|i| usize::from(i == 99)).collect();
        let mut t = DecisionTree::new(None, 0.5);
        t.fit(&x, &y, 2).unwrap();
        assert_eq!(t.leaves(), 1);
        assert_eq!(t.predict(&[99.0]).unwrap(), 0);
    }

    #[test]
    fn unfitted_and_wrong_dimension() {
        let t = DecisionTree::new(None, 0.0);
        assert!(matches!(t.predict(&[0.0]), Err(Error::State(_))));
        let mut t = DecisionTree::new(None, 0.0);
        t.fit(&[vec![0.0, 1.0]], &[0], 1).unwrap();
        assert!(matches!(t.predict(&[0.0]), Err(Error::Dimension { .. })));
    }

    proptest! {
        #[test]
        fn shatters_small_distinct_sets(
            depth in 1usize..5,
            raw in prop::collection::vec((-50i32..50, -50i32..50, 0usize..4), 1..40),
        ) {
            let mut seen = std::collections::HashSet::new();
            let pts: Vec<_> = raw.into_iter().filter(|p| seen.insert((p.0, p.1))).collect();
            let n = pts.len().min(depth + 1);
            let x: Vec<Vec<f64>> = pts[..n].iter().map(|p| vec![p.0 as f64, p.1 as f64]).collect();
            let y: Vec<usize> = pts[..n].iter().map(|p| p.2).collect();
            let mut t = DecisionTree::new(Some(depth), 0.0);
            t.fit(&x, &y, 4).unwrap();
            prop_assert_eq!(accuracy(&t, &x, &y).unwrap(), 1.0);
            prop_assert!(t.depth() <= depth);

            let mut full = DecisionTree::new(None, 0.0);
            let xs: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.0 as f64, p.1 as f64]).collect();
            let ys: Vec<usize> = pts.iter().map(|p| p.2).collect();
            full.fit(&xs, &ys, 4).unwrap();
            prop_assert_eq!(accuracy(&full, &xs, &ys).unwrap(), 1.0);
        }
    }
}
