//! Confusion metrics, ROC curves, AUC, cross-validation and external testing.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::Class;
use crate::learn::LearnError;
use crate::simcluster::ClusterError;

mod cv;
mod grid;
mod report;

pub use cv::{cross_validate, evaluate_external, CvStats, CvSummary, FoldReport, MetricStats};
pub use grid::{grid_search, nested_cross_validate, GridResult, InnerSplit, NestedCvSummary};
pub use report::{comparison_csv, roc_tsv, ComparisonRow};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("{left} scores or predictions but {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("AUC undefined: labels contain a single class")]
    SingleClass,
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
    #[error("fold {fold}: {side} side has no {class} samples")]
    FoldMissingClass { fold: usize, side: &'static str, class: Class },
    #[error("fold assignment covers {folds} samples, dataset has {samples}")]
    FoldMismatch { folds: usize, samples: usize },
    #[error("no candidate specs to search")]
    EmptyGrid,
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion_matrix(labels: &[Class], predictions: &[Class]) -> Result<ConfusionMatrix> {
    if labels.len() != predictions.len() {
        return Err(EvalError::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for (l, p) in labels.iter().zip(predictions) {
        match (l.is_positive(), p.is_positive()) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fn_ += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Ratios with a zero denominator are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn summary_metrics(cm: &ConfusionMatrix) -> SummaryMetrics {
    SummaryMetrics {
        sensitivity: ratio(cm.tp, cm.tp + cm.fn_),
        specificity: ratio(cm.tn, cm.tn + cm.fp),
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Score cutoff for this point; `None` for the initial (0, 0) point.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn check_scores(scores: &[f64], labels: &[Class]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(i));
    }
    let n_pos = labels.iter().filter(|c| c.is_positive()).count();
    Ok((n_pos, labels.len() - n_pos))
}

/// ROC curve over distinct score thresholds, descending, predicting positive
/// when `score >= threshold`. Tied scores form one diagonal step.
pub fn roc_auc(scores: &[f64], labels: &[Class]) -> Result<RocCurve> {
    let (n_pos, n_neg) = check_scores(scores, labels)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: None,
    }];
    // twice the area, in units of one positive-negative pair
    let mut area2: u128 = 0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]].total_cmp(&t) == Ordering::Equal {
            if labels[order[i]].is_positive() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) as u128 * (tp + tp0) as u128;
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold: Some(t),
        });
    }
    let auc = area2 as f64 / (2 * n_pos as u128 * n_neg as u128) as f64;
    Ok(RocCurve {
        points,
        auc,
        n_pos,
        n_neg,
    })
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half, by direct enumeration of all pairs.
pub fn auc_pairwise_oracle(scores: &[f64], labels: &[Class]) -> Result<f64> {
    let (n_pos, n_neg) = check_scores(scores, labels)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut total = 0.0;
    for (sp, lp) in scores.iter().zip(labels) {
        if !lp.is_positive() {
            continue;
        }
        for (sn, ln) in scores.iter().zip(labels) {
            if ln.is_positive() {
                continue;
            }
            if sp > sn {
                total += 1.0;
            } else if sp == sn {
                total += 0.5;
            }
        }
    }
    Ok(total / (n_pos as f64 * n_neg as f64))
}

/// Full evaluation of scores at a fixed decision threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: Option<f64>,
    /// `None` when the labels hold a single class.
    pub auc: Option<f64>,
    pub roc_points: Vec<RocPoint>,
    pub n_pos: usize,
    pub n_neg: usize,
    pub threshold: f64,
    pub confusion: ConfusionMatrix,
}

pub fn evaluate_scores(scores: &[f64], labels: &[Class], threshold: f64) -> Result<MetricReport> {
    let (n_pos, n_neg) = check_scores(scores, labels)?;
    let predictions: Vec<Class> = scores.iter().map(|&s| Class::from_positive(s >= threshold)).collect();
    let confusion = confusion_matrix(labels, &predictions)?;
    let m = summary_metrics(&confusion);
    let (auc, roc_points) = match roc_auc(scores, labels) {
        Ok(roc) => (Some(roc.auc), roc.points),
        Err(EvalError::SingleClass) => (None, Vec::new()),
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        sensitivity: m.sensitivity,
        specificity: m.specificity,
        accuracy: m.accuracy,
        auc,
        roc_points,
        n_pos,
        n_neg,
        threshold,
        confusion,
    })
}
