use std::fmt::Write as _;

use super::cv::CvStats;
use super::{MetricReport, RocPoint};

/// One row of the model comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub specificity: Option<f64>,
    pub sensitivity: Option<f64>,
    pub accuracy: Option<f64>,
    pub auc: Option<f64>,
    pub specificity_variance: Option<f64>,
    pub sensitivity_variance: Option<f64>,
    pub accuracy_variance: Option<f64>,
    pub auc_variance: Option<f64>,
}

impl ComparisonRow {
    pub fn from_cv(name: impl Into<String>, stats: &CvStats) -> Self {
        ComparisonRow {
            name: name.into(),
            specificity: stats.specificity.mean,
            sensitivity: stats.sensitivity.mean,
            accuracy: stats.accuracy.mean,
            auc: stats.auc.mean,
            specificity_variance: stats.specificity.variance,
            sensitivity_variance: stats.sensitivity.variance,
            accuracy_variance: stats.accuracy.variance,
            auc_variance: stats.auc.variance,
        }
    }

    /// A single evaluation has no spread; variance cells stay undefined.
    pub fn from_report(name: impl Into<String>, r: &MetricReport) -> Self {
        ComparisonRow {
            name: name.into(),
            specificity: r.specificity,
            sensitivity: r.sensitivity,
            accuracy: r.accuracy,
            auc: r.auc,
            specificity_variance: None,
            sensitivity_variance: None,
            accuracy_variance: None,
            auc_variance: None,
        }
    }
}

pub const COMPARISON_HEADER: [&str; 9] = [
    "Models",
    "Specificity",
    "Sensitivity",
    "Accuracy",
    "Area Under Curve",
    "Specificity Variance",
    "Sensitivity Variance",
    "Accuracy Variance",
    "Area Under Curve Variance",
];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Model x metric table; undefined values are written as `NA`.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COMPARISON_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.name.clone(),
            cell(r.specificity),
            cell(r.sensitivity),
            cell(r.accuracy),
            cell(r.auc),
            cell(r.specificity_variance),
            cell(r.sensitivity_variance),
            cell(r.accuracy_variance),
            cell(r.auc_variance),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// `threshold\tfpr\ttpr`; the opening point's threshold is `inf`.
pub fn roc_tsv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold\tfpr\ttpr\n");
    for p in points {
        let t = p.threshold.map_or_else(|| "inf".to_string(), |t| t.to_string());
        let _ = writeln!(out, "{t}\t{}\t{}", p.fpr, p.tpr);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{evaluate_scores, MetricStats};
    use crate::labeling::Class::{Hemolytic as P, NonHemolytic as N};

    #[test]
    fn comparison_layout() {
        let stats = CvStats {
            sensitivity: MetricStats { mean: Some(0.98), variance: Some(1e-4) },
            specificity: MetricStats { mean: Some(0.97), variance: Some(2e-4) },
            accuracy: MetricStats { mean: Some(0.975), variance: Some(0.0) },
            auc: MetricStats { mean: Some(0.997), variance: Some(8.18e-5) },
        };
        let csv = comparison_csv(&[ComparisonRow::from_cv("Gradient Boosting", &stats)]);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "Models,Specificity,Sensitivity,Accuracy,Area Under Curve,Specificity Variance,\
             Sensitivity Variance,Accuracy Variance,Area Under Curve Variance"
        );
        assert_eq!(lines.next().unwrap(), "Gradient Boosting,0.97,0.98,0.975,0.997,0.0002,0.0001,0,0.0000818");
    }

    #[test]
    fn roc_tsv_shape() {
        let r = evaluate_scores(&[0.9, 0.1], &[P, N], 0.5).unwrap();
        assert_eq!(roc_tsv(&r.roc_points), "threshold\tfpr\ttpr\ninf\t0\t0\n0.9\t0\t1\n0.1\t1\t1\n");
        let row = ComparisonRow::from_report("SVM", &evaluate_scores(&[0.9], &[P], 0.0).unwrap());
        assert!(comparison_csv(&[row]).ends_with("SVM,NA,1,1,NA,NA,NA,NA,NA\n"));
    }
}
