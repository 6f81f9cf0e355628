//! Gradient boosting with logistic loss and second-order (Newton) leaf steps.
//!
//! Each round fits a regression tree to the current gradients `g = p - y` and
//! hessians `h = p(1 - p)`, scoring splits by `G² / (H + λ)` and setting each
//! leaf to `-G / (H + λ)`. The model score is
//! `sigmoid(base + learning_rate * Σ tree(x))`.

use serde::{Deserialize, Serialize};

use super::tree::{Grower, Objective, TreeNode};
use super::{both_classes, check_training_input, DesignMatrix, LearnError, Result, MAX_TREE_DEPTH};
use crate::labeling::Class;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
    pub min_samples_leaf: usize,
    /// Initial log-odds; `None` uses the training prior `log(p̄ / (1 - p̄))`.
    pub base_score: Option<f64>,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_rounds: 200,
            learning_rate: 0.1,
            max_depth: 4,
            lambda: 1.0,
            min_samples_leaf: 1,
            base_score: None,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(LearnError::InvalidParam(format!(
                "learning_rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(LearnError::InvalidParam(format!("lambda {} must be >= 0", self.lambda)));
        }
        if self.max_depth > MAX_TREE_DEPTH {
            return Err(LearnError::InvalidParam(format!(
                "max_depth {} exceeds {MAX_TREE_DEPTH}",
                self.max_depth
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(LearnError::InvalidParam("min_samples_leaf must be >= 1".into()));
        }
        if self.base_score.is_some_and(|b| !b.is_finite()) {
            return Err(LearnError::InvalidParam("base_score must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub params: BoostParams,
    pub base_score: f64,
    pub learning_rate: f64,
    /// Unscaled Newton leaf weights; one tree per round.
    pub trees: Vec<TreeNode>,
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl BoostedModel {
    /// Log-odds using only the first `rounds` trees.
    pub fn raw_score_truncated(&self, x: &[f64], rounds: usize) -> f64 {
        let sum: f64 = self.trees[..rounds.min(self.trees.len())]
            .iter()
            .map(|t| t.predict(x))
            .sum();
        self.base_score + self.learning_rate * sum
    }

    pub fn raw_score(&self, x: &[f64]) -> f64 {
        self.raw_score_truncated(x, self.trees.len())
    }

    /// Probability of the hemolytic class.
    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.raw_score(x))
    }
}

pub fn train_gradient_boosting(x: &DesignMatrix, y: &[Class], params: &BoostParams) -> Result<BoostedModel> {
    params.validate()?;
    check_training_input(x, y)?;
    let base_score = match params.base_score {
        Some(b) => b,
        None => {
            if !both_classes(y) {
                return Err(LearnError::SingleClass);
            }
            let p = y.iter().filter(|c| c.is_positive()).count() as f64 / y.len() as f64;
            (p / (1.0 - p)).ln()
        }
    };
    let target: Vec<f64> = y.iter().map(|c| if c.is_positive() { 1.0 } else { 0.0 }).collect();
    let n = y.len();
    let mut score = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    for _ in 0..params.n_rounds {
        for i in 0..n {
            let p = sigmoid(score[i]);
            grad[i] = p - target[i];
            hess[i] = p * (1.0 - p);
        }
        let tree = Grower {
            x,
            objective: Objective::Newton {
                grad: &grad,
                hess: &hess,
                lambda: params.lambda,
            },
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            feature_sampling: None,
        }
        .grow((0..n).collect());
        for (i, s) in score.iter_mut().enumerate() {
            *s += params.learning_rate * tree.predict(x.row(i));
        }
        trees.push(tree);
    }
    Ok(BoostedModel {
        params: params.clone(),
        base_score,
        learning_rate: params.learning_rate,
        trees,
    })
}

/// Mean logistic loss of raw scores against labels.
pub fn logistic_loss(raw_scores: &[f64], y: &[Class]) -> f64 {
    let total: f64 = raw_scores
        .iter()
        .zip(y)
        .map(|(&s, c)| {
            // log(1 + exp(-m)) with margin m = ±s
            let m = if c.is_positive() { s } else { -s };
            if m > 0.0 {
                (-m).exp().ln_1p()
            } else {
                -m + m.exp().ln_1p()
            }
        })
        .sum();
    total / raw_scores.len() as f64
}
