//! Random forest of Gini trees with bootstrap resampling and per-node
//! feature subsampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_classifier, TreeNode, TreeParams};
use super::{check_training_input, DesignMatrix, LearnError, Result, MAX_TREE_DEPTH};
use crate::features::FEATURE_DIM;
use crate::labeling::Class;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub features_per_split: usize,
    pub bootstrap: bool,
    pub min_samples_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            max_depth: 12,
            // ceil(sqrt(20))
            features_per_split: 5,
            bootstrap: true,
            min_samples_leaf: 1,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(LearnError::InvalidParam("n_trees must be >= 1".into()));
        }
        if self.max_depth == 0 || self.max_depth > MAX_TREE_DEPTH {
            return Err(LearnError::InvalidParam(format!(
                "max_depth {} outside [1, {MAX_TREE_DEPTH}]",
                self.max_depth
            )));
        }
        if !(1..=FEATURE_DIM).contains(&self.features_per_split) {
            return Err(LearnError::InvalidParam(format!(
                "features_per_split {} outside [1, {FEATURE_DIM}]",
                self.features_per_split
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(LearnError::InvalidParam("min_samples_leaf must be >= 1".into()));
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            features_per_split: Some(self.features_per_split),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    /// Leaves vote 0 or 1.
    pub trees: Vec<TreeNode>,
}

impl ForestModel {
    /// Fraction of trees voting hemolytic.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let votes: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        votes / self.trees.len() as f64
    }
}

/// Random stream for tree `index`: ChaCha8 keyed by the master seed, with the
/// tree index as stream id.
fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn train_random_forest(x: &DesignMatrix, y: &[Class], params: &ForestParams, seed: u64) -> Result<ForestModel> {
    params.validate()?;
    check_training_input(x, y)?;
    let positive: Vec<bool> = y.iter().map(|c| c.is_positive()).collect();
    let n = y.len();
    let tree_params = params.tree_params();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let mut weight = vec![0.0; n];
            if params.bootstrap {
                for _ in 0..n {
                    weight[rng.random_range(0..n)] += 1.0;
                }
            } else {
                weight.fill(1.0);
            }
            grow_classifier(x, &positive, &weight, &tree_params, rng)
        })
        .collect();
    Ok(ForestModel {
        params: params.clone(),
        trees,
    })
}
