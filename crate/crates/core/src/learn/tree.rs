//! CART tree growth shared by single trees, forests and boosting.
//!
//! Candidate thresholds are midpoints between consecutive distinct sorted
//! values; samples with `x < threshold` go left. Among equal-scoring splits the
//! lowest feature index wins, then the lowest threshold.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training_input, DesignMatrix, LearnError, Result, MAX_TREE_DEPTH};
use crate::labeling::Class;

/// Nodes this large evaluate candidate features in parallel.
const PARALLEL_NODE_SIZE: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] < *threshold { left } else { right };
                }
            }
        }
    }

    /// Index of the leaf reached by `x`, counting leaves left to right.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut node = self;
        let mut offset = 0;
        loop {
            match node {
                TreeNode::Leaf { .. } => return offset,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if x[*feature] < *threshold {
                        node = left;
                    } else {
                        offset += left.n_leaves();
                        node = right;
                    }
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Leaf values in left-to-right order.
    pub fn leaf_values(&self) -> Vec<f64> {
        match self {
            TreeNode::Leaf { value } => vec![*value],
            TreeNode::Split { left, right, .. } => {
                let mut v = left.leaf_values();
                v.extend(right.leaf_values());
                v
            }
        }
    }

    /// Depth of the deepest leaf; a lone leaf has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// The root split, if any.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split {
                feature, threshold, ..
            } => Some((*feature, *threshold)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features examined per split; `None` means all.
    pub features_per_split: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 12,
            min_samples_leaf: 1,
            features_per_split: None,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth > MAX_TREE_DEPTH {
            return Err(LearnError::InvalidParam(format!(
                "max_depth {} exceeds {MAX_TREE_DEPTH}",
                self.max_depth
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(LearnError::InvalidParam("min_samples_leaf must be >= 1".into()));
        }
        if let Some(f) = self.features_per_split {
            if !(1..=crate::features::FEATURE_DIM).contains(&f) {
                return Err(LearnError::InvalidParam(format!(
                    "features_per_split {f} outside [1, 20]"
                )));
            }
        }
        Ok(())
    }
}

/// A single classification tree; leaves hold the predicted class as 0 or 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub params: TreeParams,
    pub root: TreeNode,
}

impl TreeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.root.predict(x)
    }
}

/// What a node optimizes.
pub(crate) enum Objective<'a> {
    /// Weighted Gini impurity; leaf = majority class (ties to class 0).
    Gini { positive: &'a [bool], weight: &'a [f64] },
    /// Second-order boosting gain; leaf = -G / (H + lambda).
    Newton {
        grad: &'a [f64],
        hess: &'a [f64],
        lambda: f64,
    },
}

#[derive(Clone, Copy, Default)]
struct Stats {
    // Gini: weighted positive / negative mass. Newton: gradient / hessian sums.
    a: f64,
    b: f64,
}

impl Objective<'_> {
    fn add(&self, s: &mut Stats, i: usize) {
        match self {
            Objective::Gini { positive, weight } => {
                if positive[i] {
                    s.a += weight[i];
                } else {
                    s.b += weight[i];
                }
            }
            Objective::Newton { grad, hess, .. } => {
                s.a += grad[i];
                s.b += hess[i];
            }
        }
    }

    /// Larger is better; split gain is `score(l) + score(r) - score(parent)`.
    fn score(&self, s: &Stats) -> Option<f64> {
        match self {
            Objective::Gini { .. } => {
                let w = s.a + s.b;
                (w > 0.0).then(|| (s.a * s.a + s.b * s.b) / w)
            }
            Objective::Newton { lambda, .. } => {
                let d = s.b + lambda;
                (d > 0.0).then(|| 0.5 * s.a * s.a / d)
            }
        }
    }

    fn leaf_value(&self, s: &Stats) -> f64 {
        match self {
            Objective::Gini { .. } => {
                if s.a > s.b {
                    1.0
                } else {
                    0.0
                }
            }
            Objective::Newton { lambda, .. } => {
                let d = s.b + lambda;
                if d > 0.0 {
                    -s.a / d
                } else {
                    0.0
                }
            }
        }
    }

    fn is_pure(&self, s: &Stats) -> bool {
        match self {
            Objective::Gini { .. } => s.a == 0.0 || s.b == 0.0,
            Objective::Newton { .. } => false,
        }
    }

    /// Gains at or below this are treated as zero.
    fn min_gain(&self, s: &Stats) -> f64 {
        match self {
            Objective::Gini { .. } => 1e-12 * (s.a + s.b),
            Objective::Newton { .. } => 1e-12 * (s.a.abs() + s.b).max(1e-300),
        }
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

pub(crate) struct Grower<'a> {
    pub x: &'a DesignMatrix,
    pub objective: Objective<'a>,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Per-node feature subsampling: (count, rng).
    pub feature_sampling: Option<(usize, ChaCha8Rng)>,
}

impl Grower<'_> {
    pub fn grow(&mut self, indices: Vec<usize>) -> TreeNode {
        self.grow_node(indices, 0)
    }

    fn grow_node(&mut self, indices: Vec<usize>, depth: usize) -> TreeNode {
        let mut stats = Stats::default();
        for &i in &indices {
            self.objective.add(&mut stats, i);
        }
        let leaf = TreeNode::Leaf {
            value: self.objective.leaf_value(&stats),
        };
        if depth >= self.max_depth
            || indices.len() < 2 * self.min_samples_leaf
            || self.objective.is_pure(&stats)
        {
            return leaf;
        }
        let Some(parent_score) = self.objective.score(&stats) else {
            return leaf;
        };
        let features = self.candidate_features();
        let Some(best) = self.best_split(&indices, &features, parent_score) else {
            return leaf;
        };
        if best.gain <= self.objective.min_gain(&stats) {
            return leaf;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = indices
            .into_iter()
            .partition(|&i| self.x.get(i, best.feature) < best.threshold);
        let left = self.grow_node(l, depth + 1);
        let right = self.grow_node(r, depth + 1);
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let n = self.x.n_cols();
        match &mut self.feature_sampling {
            Some((count, rng)) if *count < n => {
                let mut f = rand::seq::index::sample(rng, n, *count).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..n).collect(),
        }
    }

    fn best_split(&self, indices: &[usize], features: &[usize], parent_score: f64) -> Option<Candidate> {
        let per_feature: Vec<Option<Candidate>> = if indices.len() >= PARALLEL_NODE_SIZE {
            features
                .par_iter()
                .map(|&f| self.best_for_feature(indices, f, parent_score))
                .collect()
        } else {
            features
                .iter()
                .map(|&f| self.best_for_feature(indices, f, parent_score))
                .collect()
        };
        let mut best: Option<Candidate> = None;
        for c in per_feature.into_iter().flatten() {
            if best.is_none_or(|b| c.gain > b.gain) {
                best = Some(c);
            }
        }
        best
    }

    fn best_for_feature(&self, indices: &[usize], feature: usize, parent_score: f64) -> Option<Candidate> {
        let mut order: Vec<usize> = indices.to_vec();
        order.sort_by(|&a, &b| {
            self.x
                .get(a, feature)
                .total_cmp(&self.x.get(b, feature))
                .then(a.cmp(&b))
        });
        let mut total = Stats::default();
        for &i in &order {
            self.objective.add(&mut total, i);
        }
        let mut left = Stats::default();
        let mut best: Option<Candidate> = None;
        let n = order.len();
        for pos in 0..n - 1 {
            self.objective.add(&mut left, order[pos]);
            let lo = self.x.get(order[pos], feature);
            let hi = self.x.get(order[pos + 1], feature);
            if lo >= hi {
                continue;
            }
            let n_left = pos + 1;
            if n_left < self.min_samples_leaf || n - n_left < self.min_samples_leaf {
                continue;
            }
            let right = Stats {
                a: total.a - left.a,
                b: total.b - left.b,
            };
            let (Some(sl), Some(sr)) = (self.objective.score(&left), self.objective.score(&right)) else {
                continue;
            };
            let gain = sl + sr - parent_score;
            if best.is_none_or(|b| gain > b.gain) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold <= lo {
                    threshold = hi;
                }
                best = Some(Candidate {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
        best
    }
}

/// Grows one classification tree minimizing weighted Gini impurity.
///
/// `weights` default to 1; samples with zero weight are ignored. `seed` only
/// matters when `features_per_split` subsamples features.
pub fn train_decision_tree(
    x: &DesignMatrix,
    y: &[Class],
    weights: Option<&[f64]>,
    params: &TreeParams,
    seed: u64,
) -> Result<TreeModel> {
    check_training_input(x, y)?;
    params.validate()?;
    let ones;
    let weight = match weights {
        Some(w) => {
            if w.len() != y.len() {
                return Err(LearnError::LengthMismatch {
                    rows: x.n_rows(),
                    labels: w.len(),
                });
            }
            if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(LearnError::InvalidParam("weights must be finite and >= 0".into()));
            }
            w
        }
        None => {
            ones = vec![1.0; y.len()];
            &ones
        }
    };
    let positive: Vec<bool> = y.iter().map(|c| c.is_positive()).collect();
    if weight.iter().all(|&w| w == 0.0) {
        return Err(LearnError::EmptyInput);
    }
    let root = grow_classifier(x, &positive, weight, params, ChaCha8Rng::seed_from_u64(seed));
    Ok(TreeModel {
        params: params.clone(),
        root,
    })
}

pub(crate) fn grow_classifier(
    x: &DesignMatrix,
    positive: &[bool],
    weight: &[f64],
    params: &TreeParams,
    rng: ChaCha8Rng,
) -> TreeNode {
    let indices: Vec<usize> = (0..positive.len()).filter(|&i| weight[i] > 0.0).collect();
    let mut grower = Grower {
        x,
        objective: Objective::Gini { positive, weight },
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        feature_sampling: params.features_per_split.map(|f| (f.min(x.n_cols()), rng)),
    };
    grower.grow(indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Class::{Hemolytic as P, NonHemolytic as N};

    fn column(values: &[f64]) -> DesignMatrix {
        DesignMatrix::new(1, values.to_vec()).unwrap()
    }

    #[test]
    fn identical_labels_single_leaf() {
        let t = train_decision_tree(&column(&[1.0, 2.0, 3.0]), &[P, P, P], None, &TreeParams::default(), 0).unwrap();
        assert_eq!(t.root, TreeNode::Leaf { value: 1.0 });
    }

    #[test]
    fn hand_traced_root_split() {
        let t = train_decision_tree(&column(&[1.0, 2.0, 3.0, 4.0]), &[P, P, N, N], None, &TreeParams::default(), 0)
            .unwrap();
        assert_eq!(t.root.root_split(), Some((0, 2.5)));
        assert_eq!(t.root.depth(), 1);
        assert_eq!(t.predict(&[2.0]), 1.0);
        assert_eq!(t.predict(&[3.0]), 0.0);
    }

    #[test]
    fn depth_zero_is_majority_leaf_with_ties_to_zero() {
        let p = TreeParams {
            max_depth: 0,
            ..TreeParams::default()
        };
        let t = train_decision_tree(&column(&[1.0, 2.0, 3.0]), &[P, P, N], None, &p, 0).unwrap();
        assert_eq!(t.root, TreeNode::Leaf { value: 1.0 });
        let t = train_decision_tree(&column(&[1.0, 2.0]), &[P, N], None, &p, 0).unwrap();
        assert_eq!(t.root, TreeNode::Leaf { value: 0.0 });
    }

    #[test]
    fn equal_gain_prefers_lowest_feature() {
        // both features separate perfectly
        let x = DesignMatrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let t = train_decision_tree(&x, &[N, P], None, &TreeParams::default(), 0).unwrap();
        assert_eq!(t.root.root_split(), Some((0, 0.5)));
    }

    #[test]
    fn weights_drop_zero_weight_samples() {
        let x = column(&[1.0, 2.0, 3.0, 4.0]);
        let t = train_decision_tree(&x, &[P, N, P, N], Some(&[0.0, 1.0, 1.0, 0.0]), &TreeParams::default(), 0).unwrap();
        assert_eq!(t.root.root_split(), Some((0, 2.5)));
        assert_eq!(t.predict(&[1.0]), 0.0);
    }

    #[test]
    fn errors() {
        let x = column(&[1.0, 2.0]);
        assert_eq!(
            train_decision_tree(&x, &[P], None, &TreeParams::default(), 0),
            Err(LearnError::LengthMismatch { rows: 2, labels: 1 })
        );
        let empty = DesignMatrix::new(1, vec![]).unwrap();
        assert_eq!(
            train_decision_tree(&empty, &[], None, &TreeParams::default(), 0),
            Err(LearnError::EmptyInput)
        );
    }

    #[test]
    fn leaf_index_and_values_agree() {
        let x = column(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let t = train_decision_tree(&x, &[P, N, P, N, N, P], None, &TreeParams::default(), 0).unwrap();
        let vals = t.root.leaf_values();
        for v in 1..=6 {
            let xi = [v as f64];
            assert_eq!(vals[t.root.leaf_index(&xi)], t.predict(&xi));
        }
    }
}
