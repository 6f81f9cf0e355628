//! Amino-acid composition features.
//!
//! Components follow the alphabetical order `ACDEFGHIKLMNPQRSTVWY`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Peptide, ALPHABET};
use crate::labeling::{Class, LabeledDataset};

pub const FEATURE_DIM: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("cannot normalize an all-zero vector")]
    ZeroVector,
    #[error("expected {expected} features, got {found}")]
    WrongKind { expected: FeatureKind, found: FeatureKind },
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("feature matrix has zero total variance")]
    ZeroVariance,
    #[error("feature CSV: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    RawCounts,
    /// Euclidean unit norm.
    #[default]
    UnitNorm,
    /// Manhattan unit norm (composition fractions).
    UnitL1,
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::RawCounts => "raw_counts",
            FeatureKind::UnitNorm => "unit_norm",
            FeatureKind::UnitL1 => "unit_l1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub components: [f64; FEATURE_DIM],
    pub kind: FeatureKind,
}

impl FeatureVector {
    pub fn norm_l2(&self) -> f64 {
        self.components.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norm_l1(&self) -> f64 {
        self.components.iter().map(|v| v.abs()).sum()
    }
}

fn residue_index(residue: u8) -> usize {
    ALPHABET
        .iter()
        .position(|&a| a == residue)
        .expect("peptides hold canonical residues only")
}

pub fn aac_counts(peptide: &Peptide) -> FeatureVector {
    let mut components = [0.0; FEATURE_DIM];
    for &r in peptide.residues() {
        components[residue_index(r)] += 1.0;
    }
    FeatureVector {
        components,
        kind: FeatureKind::RawCounts,
    }
}

fn require_raw(v: &FeatureVector) -> Result<(), FeatureError> {
    if v.kind != FeatureKind::RawCounts {
        return Err(FeatureError::WrongKind {
            expected: FeatureKind::RawCounts,
            found: v.kind,
        });
    }
    Ok(())
}

pub fn l2_normalize(v: &FeatureVector) -> Result<FeatureVector, FeatureError> {
    require_raw(v)?;
    let norm = v.norm_l2();
    if norm == 0.0 {
        return Err(FeatureError::ZeroVector);
    }
    Ok(FeatureVector {
        components: v.components.map(|c| c / norm),
        kind: FeatureKind::UnitNorm,
    })
}

pub fn l1_normalize(v: &FeatureVector) -> Result<FeatureVector, FeatureError> {
    require_raw(v)?;
    let norm = v.norm_l1();
    if norm == 0.0 {
        return Err(FeatureError::ZeroVector);
    }
    Ok(FeatureVector {
        components: v.components.map(|c| c / norm),
        kind: FeatureKind::UnitL1,
    })
}

/// Counts, then normalizes according to `kind`.
pub fn featurize(peptide: &Peptide, kind: FeatureKind) -> FeatureVector {
    let counts = aac_counts(peptide);
    // peptides are nonempty, so the count vector is never zero
    match kind {
        FeatureKind::RawCounts => counts,
        FeatureKind::UnitNorm => l2_normalize(&counts).expect("nonempty peptide"),
        FeatureKind::UnitL1 => l1_normalize(&counts).expect("nonempty peptide"),
    }
}

/// Rows of a single feature kind, aligned with some sample list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: Vec<[f64; FEATURE_DIM]>,
    kind: FeatureKind,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<[f64; FEATURE_DIM]>, kind: FeatureKind) -> Self {
        FeatureMatrix { rows, kind }
    }

    pub fn from_peptides<'a, I>(peptides: I, kind: FeatureKind) -> Self
    where
        I: IntoIterator<Item = &'a Peptide>,
    {
        let peps: Vec<&Peptide> = peptides.into_iter().collect();
        let rows = peps
            .par_iter()
            .map(|p| featurize(p, kind).components)
            .collect();
        FeatureMatrix { rows, kind }
    }

    pub fn from_dataset(dataset: &LabeledDataset, kind: FeatureKind) -> Self {
        Self::from_peptides(dataset.peptides(), kind)
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn rows(&self) -> &[[f64; FEATURE_DIM]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> FeatureVector {
        FeatureVector {
            components: self.rows[i],
            kind: self.kind,
        }
    }

    pub fn subset(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            rows: indices.iter().map(|&i| self.rows[i]).collect(),
            kind: self.kind,
        }
    }

    /// CSV with header `id,label,A,C,...,Y`; `labels` may be omitted for
    /// unlabeled inputs, leaving the label column empty.
    pub fn to_csv(&self, ids: &[&str], labels: Option<&[Class]>) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend(ALPHABET.iter().map(|&c| (c as char).to_string()));
        w.write_record(&header).expect("in-memory write");
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec = vec![
                ids[i].to_string(),
                labels.map_or(String::new(), |l| l[i].to_string()),
            ];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    /// Reads a CSV written by [`FeatureMatrix::to_csv`]. Returns ids alongside the matrix.
    ///
    /// Rows are checked against `kind`: counts must be nonnegative integers and
    /// normalized rows must have unit norm within 1e-9.
    pub fn from_csv(text: &str, kind: FeatureKind) -> Result<(Vec<String>, FeatureMatrix), FeatureError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| FeatureError::Csv(e.to_string()))?
            .clone();
        let expected: Vec<String> = ["id", "label"]
            .iter()
            .map(|s| s.to_string())
            .chain(ALPHABET.iter().map(|&c| (c as char).to_string()))
            .collect();
        if headers.iter().ne(expected.iter().map(String::as_str)) {
            return Err(FeatureError::Csv(format!(
                "header must be {}",
                expected.join(",")
            )));
        }
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| FeatureError::Csv(e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            let mut row = [0.0; FEATURE_DIM];
            for (j, slot) in row.iter_mut().enumerate() {
                let raw = &rec[j + 2];
                *slot = raw
                    .parse()
                    .map_err(|_| FeatureError::Csv(format!("line {line}: bad value '{raw}'")))?;
            }
            let v = FeatureVector { components: row, kind };
            let ok = match kind {
                FeatureKind::RawCounts => row.iter().all(|c| *c >= 0.0 && c.fract() == 0.0),
                FeatureKind::UnitNorm => (v.norm_l2() - 1.0).abs() <= 1e-9,
                FeatureKind::UnitL1 => (v.norm_l1() - 1.0).abs() <= 1e-9,
            };
            if !ok {
                return Err(FeatureError::Csv(format!(
                    "line {line}: row is not a valid {kind} vector"
                )));
            }
            ids.push(rec[0].to_string());
            rows.push(row);
        }
        Ok((ids, FeatureMatrix { rows, kind }))
    }
}

/// Cumulative fraction of variance captured by the leading principal components.
#[allow(clippy::needless_range_loop)]
pub fn pca_cumulative_variance(m: &FeatureMatrix) -> Result<[f64; FEATURE_DIM], FeatureError> {
    let n = m.len();
    if n < 2 {
        return Err(FeatureError::TooFewRows(n));
    }
    let mut mean = [0.0; FEATURE_DIM];
    for row in m.rows() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= n as f64;
    }
    let mut cov = vec![vec![0.0; FEATURE_DIM]; FEATURE_DIM];
    for row in m.rows() {
        let centered: Vec<f64> = row.iter().zip(&mean).map(|(v, mu)| v - mu).collect();
        for i in 0..FEATURE_DIM {
            for j in i..FEATURE_DIM {
                cov[i][j] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..FEATURE_DIM {
        for j in i..FEATURE_DIM {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    let trace: f64 = (0..FEATURE_DIM).map(|i| cov[i][i]).sum();
    if trace <= 0.0 {
        return Err(FeatureError::ZeroVariance);
    }
    let mut eig = symmetric_eigenvalues(cov);
    // covariance is PSD; clamp round-off negatives
    for e in &mut eig {
        *e = e.max(0.0);
    }
    eig.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = eig.iter().sum();
    let mut out = [0.0; FEATURE_DIM];
    let mut acc = 0.0;
    for (o, e) in out.iter_mut().zip(&eig) {
        acc += e;
        *o = acc / total;
    }
    out[FEATURE_DIM - 1] = 1.0;
    Ok(out)
}

/// Scree data as TSV: `component_index\tcumulative_variance_fraction`, 1-based.
pub fn scree_tsv(cumulative: &[f64]) -> String {
    let mut s = String::from("component_index\tcumulative_variance_fraction\n");
    for (i, v) in cumulative.iter().enumerate() {
        s.push_str(&format!("{}\t{}\n", i + 1, v));
    }
    s
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
///
/// Sweeps until the off-diagonal Frobenius norm falls below 1e-12 times the
/// full norm (or 100 sweeps).
#[allow(clippy::needless_range_loop)]
pub fn symmetric_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    let frob: f64 = a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    if frob == 0.0 {
        return vec![0.0; n];
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-12 * frob {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}
