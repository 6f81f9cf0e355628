use serde::{Deserialize, Serialize};

use super::cv::{check_folds, CvStats, FoldReport};
use super::{cross_validate, evaluate_scores, EvalError, Result};
use crate::features::FeatureMatrix;
use crate::labeling::LabeledDataset;
use crate::learn::{train_on_features, ModelSpec};
use crate::simcluster::{
    build_clusters, cluster_stratified_kfold, sample_stratified_kfold, ClusterConfig, FoldAssignment,
};

/// How inner folds are drawn from a training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InnerSplit {
    Random,
    Cluster(ClusterConfig),
}

impl InnerSplit {
    fn folds(&self, dataset: &LabeledDataset, k: usize, seed: u64) -> Result<FoldAssignment> {
        Ok(match self {
            InnerSplit::Random => sample_stratified_kfold(dataset, k, seed)?,
            InnerSplit::Cluster(cfg) => cluster_stratified_kfold(&build_clusters(dataset, cfg)?, k, seed)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub candidates: Vec<ModelSpec>,
    /// Inner cross-validated mean AUC per candidate.
    pub mean_auc: Vec<Option<f64>>,
    pub best: usize,
}

impl GridResult {
    pub fn best_spec(&self) -> &ModelSpec {
        &self.candidates[self.best]
    }
}

/// Cross-validates each candidate on `dataset` and picks the highest mean AUC;
/// the earliest candidate wins ties.
pub fn grid_search(
    dataset: &LabeledDataset,
    features: &FeatureMatrix,
    candidates: &[ModelSpec],
    k: usize,
    inner: &InnerSplit,
    seed: u64,
) -> Result<GridResult> {
    if candidates.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let folds = inner.folds(dataset, k, seed)?;
    let mean_auc: Vec<Option<f64>> = candidates
        .iter()
        .map(|spec| Ok(cross_validate(dataset, features, &folds, spec, None)?.stats.auc.mean))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, m) in mean_auc.iter().enumerate() {
        if m.unwrap_or(f64::NEG_INFINITY) > mean_auc[best].unwrap_or(f64::NEG_INFINITY) {
            best = i;
        }
    }
    Ok(GridResult {
        candidates: candidates.to_vec(),
        mean_auc,
        best,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedCvSummary {
    pub k: usize,
    pub inner_k: usize,
    pub folds: Vec<FoldReport>,
    pub chosen: Vec<ModelSpec>,
    pub stats: CvStats,
}

/// Outer cross-validation where each fold's model is chosen by
/// [`grid_search`] on that fold's training side only.
pub fn nested_cross_validate(
    dataset: &LabeledDataset,
    features: &FeatureMatrix,
    folds: &FoldAssignment,
    candidates: &[ModelSpec],
    inner_k: usize,
    inner: &InnerSplit,
) -> Result<NestedCvSummary> {
    if features.len() != dataset.len() {
        return Err(EvalError::LengthMismatch {
            left: features.len(),
            right: dataset.len(),
        });
    }
    check_folds(dataset, folds)?;
    let classes = dataset.classes();
    let mut reports = Vec::with_capacity(folds.k);
    let mut chosen = Vec::with_capacity(folds.k);
    for f in 0..folds.k {
        let train = folds.train_indices(f);
        let test = folds.test_indices(f);
        let train_set = dataset.subset(&train);
        let train_x = features.subset(&train);
        let grid = grid_search(&train_set, &train_x, candidates, inner_k, inner, folds.seed)?;
        let spec = grid.best_spec().clone();
        let model = train_on_features(&spec, &train_x, &train_set.classes())?;
        let scores = model.score_matrix(&features.subset(&test))?;
        let y_test: Vec<_> = test.iter().map(|&i| classes[i]).collect();
        reports.push(FoldReport {
            fold: f,
            n_train: train.len(),
            n_test: test.len(),
            report: evaluate_scores(&scores, &y_test, spec.family().default_threshold())?,
        });
        chosen.push(spec);
    }
    let stats = CvStats::from_reports(reports.iter().map(|r| &r.report));
    Ok(NestedCvSummary {
        k: folds.k,
        inner_k,
        folds: reports,
        chosen,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use crate::learn::{FamilyParams, TreeParams};
    use crate::synth::{generate_corpus, SynthConfig};

    #[test]
    fn nested_cv_picks_from_grid() {
        let d = generate_corpus(&SynthConfig {
            n_peptides: 80,
            ..SynthConfig::default()
        });
        let x = FeatureMatrix::from_dataset(&d, FeatureKind::UnitNorm);
        let stump = ModelSpec {
            params: FamilyParams::Tree(TreeParams {
                max_depth: 0,
                ..TreeParams::default()
            }),
            seed: 1,
        };
        let candidates = vec![stump, ModelSpec::tree()];
        let grid = grid_search(&d, &x, &candidates, 3, &InnerSplit::Random, 7).unwrap();
        // a single leaf scores every sample alike
        assert_eq!(grid.mean_auc[0], Some(0.5));
        assert_eq!(grid.best, 1);

        let outer = sample_stratified_kfold(&d, 3, 7).unwrap();
        let nested = nested_cross_validate(&d, &x, &outer, &candidates, 3, &InnerSplit::Random).unwrap();
        assert_eq!(nested.folds.len(), 3);
        assert!(nested.chosen.iter().all(|s| *s == candidates[1]));
        assert_eq!(grid_search(&d, &x, &[], 3, &InnerSplit::Random, 7), Err(EvalError::EmptyGrid));
    }
}
