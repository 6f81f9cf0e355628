use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_scores, EvalError, MetricReport, Result};
use crate::features::FeatureMatrix;
use crate::labeling::{Class, LabeledDataset};
use crate::learn::{train_on_features, Family, ModelSpec, TrainedModel};
use crate::simcluster::{FoldAssignment, FoldGranularity};

/// Mean and sample variance (k - 1 denominator) of one metric across folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: Option<f64>,
    pub variance: Option<f64>,
}

impl MetricStats {
    /// `None` entries (undefined on some fold) make the whole statistic
    /// undefined.
    pub fn from_values(values: &[Option<f64>]) -> MetricStats {
        let defined: Option<Vec<f64>> = values.iter().copied().collect();
        let Some(v) = defined.filter(|v| !v.is_empty()) else {
            return MetricStats {
                mean: None,
                variance: None,
            };
        };
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let variance = (v.len() > 1).then(|| v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0));
        MetricStats {
            mean: Some(mean),
            variance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvStats {
    pub sensitivity: MetricStats,
    pub specificity: MetricStats,
    pub accuracy: MetricStats,
    pub auc: MetricStats,
}

impl CvStats {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a MetricReport> + Clone) -> CvStats {
        let pick = |f: fn(&MetricReport) -> Option<f64>| {
            MetricStats::from_values(&reports.clone().into_iter().map(f).collect::<Vec<_>>())
        };
        CvStats {
            sensitivity: pick(|r| r.sensitivity),
            specificity: pick(|r| r.specificity),
            accuracy: pick(|r| r.accuracy),
            auc: pick(|r| r.auc),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub family: Family,
    pub spec: ModelSpec,
    pub k: usize,
    pub granularity: FoldGranularity,
    pub fold_seed: u64,
    pub folds: Vec<FoldReport>,
    pub stats: CvStats,
}

pub(crate) fn check_folds(dataset: &LabeledDataset, folds: &FoldAssignment) -> Result<()> {
    if folds.fold_of.len() != dataset.len() {
        return Err(EvalError::FoldMismatch {
            folds: folds.fold_of.len(),
            samples: dataset.len(),
        });
    }
    let samples = dataset.samples();
    for f in 0..folds.k {
        for (side, idx) in [("training", folds.train_indices(f)), ("test", folds.test_indices(f))] {
            for class in Class::BOTH {
                if !idx.iter().any(|&i| samples[i].class == class) {
                    return Err(EvalError::FoldMissingClass { fold: f, side, class });
                }
            }
        }
    }
    Ok(())
}

/// Trains on every fold's complement and evaluates on the fold. Folds run in
/// parallel; results are gathered in fold order.
pub fn cross_validate(
    dataset: &LabeledDataset,
    features: &FeatureMatrix,
    folds: &FoldAssignment,
    spec: &ModelSpec,
    threshold: Option<f64>,
) -> Result<CvSummary> {
    if features.len() != dataset.len() {
        return Err(EvalError::LengthMismatch {
            left: features.len(),
            right: dataset.len(),
        });
    }
    spec.validate()?;
    check_folds(dataset, folds)?;
    let classes = dataset.classes();
    let threshold = threshold.unwrap_or(spec.family().default_threshold());
    let reports: Vec<FoldReport> = (0..folds.k)
        .into_par_iter()
        .map(|f| {
            let train = folds.train_indices(f);
            let test = folds.test_indices(f);
            let y_train: Vec<Class> = train.iter().map(|&i| classes[i]).collect();
            let model = train_on_features(spec, &features.subset(&train), &y_train)?;
            let y_test: Vec<Class> = test.iter().map(|&i| classes[i]).collect();
            let scores = model.score_matrix(&features.subset(&test))?;
            Ok(FoldReport {
                fold: f,
                n_train: train.len(),
                n_test: test.len(),
                report: evaluate_scores(&scores, &y_test, threshold)?,
            })
        })
        .collect::<Result<_>>()?;
    let stats = CvStats::from_reports(reports.iter().map(|r| &r.report));
    Ok(CvSummary {
        family: spec.family(),
        spec: spec.clone(),
        k: folds.k,
        granularity: folds.granularity,
        fold_seed: folds.seed,
        folds: reports,
        stats,
    })
}

/// Scores every sample of an independent dataset. Single-class datasets give
/// a report with undefined AUC.
pub fn evaluate_external(
    model: &TrainedModel,
    dataset: &LabeledDataset,
    features: &FeatureMatrix,
    threshold: Option<f64>,
) -> Result<MetricReport> {
    model.check_kind(features.kind())?;
    if features.len() != dataset.len() {
        return Err(EvalError::LengthMismatch {
            left: features.len(),
            right: dataset.len(),
        });
    }
    let scores = model.score_matrix(features)?;
    evaluate_scores(&scores, &dataset.classes(), threshold.unwrap_or(model.default_threshold()))
}
