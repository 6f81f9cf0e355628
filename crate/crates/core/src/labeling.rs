//! Concentration/hemolysis threshold rules that turn assay records into
//! binary class labels.
//!
//! A record is hemolytic if it meets any hemolytic row
//! (`percent >= min` and `concentration <= max`), otherwise non-hemolytic if it
//! meets any non-hemolytic row (`percent <= max` and `concentration >= min`),
//! otherwise indeterminate. Concentrations are taken to be µM.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{HemolysisRecord, Peptide};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabelingError {
    #[error("no records to label")]
    EmptyInput,
    #[error("labeled dataset is empty ({indeterminate} indeterminate records dropped); unusable for training")]
    NoSamples { indeterminate: usize },
    #[error("dataset has no {0} samples; unusable for training")]
    MissingClass(Class),
    #[error("invalid criteria: {0}")]
    InvalidCriteria(String),
    #[error("row {row}: unknown label '{value}'")]
    UnknownLabel { row: usize, value: String },
    #[error("labeled CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),
}

/// Binary class. Hemolytic is the positive class throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Class {
    NonHemolytic,
    Hemolytic,
}

impl Class {
    pub const BOTH: [Class; 2] = [Class::NonHemolytic, Class::Hemolytic];

    pub fn is_positive(self) -> bool {
        self == Class::Hemolytic
    }

    pub fn as_index(self) -> usize {
        self as usize
    }

    pub fn from_positive(positive: bool) -> Class {
        if positive {
            Class::Hemolytic
        } else {
            Class::NonHemolytic
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Class::NonHemolytic => "NonHemolytic",
            Class::Hemolytic => "Hemolytic",
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Class {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "Hemolytic" | "hemolytic" | "1" => Ok(Class::Hemolytic),
            "NonHemolytic" | "non_hemolytic" | "nonhemolytic" | "0" => Ok(Class::NonHemolytic),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Hemolytic,
    NonHemolytic,
    Indeterminate,
}

impl Label {
    pub fn class(self) -> Option<Class> {
        match self {
            Label::Hemolytic => Some(Class::Hemolytic),
            Label::NonHemolytic => Some(Class::NonHemolytic),
            Label::Indeterminate => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HemolyticRow {
    pub min_hemolysis_percent: f64,
    pub max_concentration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonHemolyticRow {
    pub max_hemolysis_percent: f64,
    pub min_concentration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HemolysisCriteria {
    pub hemolytic_rows: Vec<HemolyticRow>,
    pub nonhemolytic_rows: Vec<NonHemolyticRow>,
}

impl Default for HemolysisCriteria {
    fn default() -> Self {
        let hemolytic = [
            (5.0, 10.0),
            (10.0, 20.0),
            (15.0, 50.0),
            (20.0, 100.0),
            (30.0, 200.0),
            (50.0, 300.0),
        ];
        let nonhemolytic = [
            (2.0, 10.0),
            (5.0, 20.0),
            (10.0, 50.0),
            (15.0, 100.0),
            (20.0, 200.0),
            (30.0, 300.0),
            (50.0, 500.0),
        ];
        HemolysisCriteria {
            hemolytic_rows: hemolytic
                .iter()
                .map(|&(p, c)| HemolyticRow {
                    min_hemolysis_percent: p,
                    max_concentration: c,
                })
                .collect(),
            nonhemolytic_rows: nonhemolytic
                .iter()
                .map(|&(p, c)| NonHemolyticRow {
                    max_hemolysis_percent: p,
                    min_concentration: c,
                })
                .collect(),
        }
    }
}

impl HemolysisCriteria {
    pub fn validate(&self) -> Result<(), LabelingError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        for r in &self.hemolytic_rows {
            if !positive(r.min_hemolysis_percent) || !positive(r.max_concentration) {
                return Err(LabelingError::InvalidCriteria(format!(
                    "hemolytic row {r:?} has a nonpositive threshold"
                )));
            }
        }
        for r in &self.nonhemolytic_rows {
            if !positive(r.max_hemolysis_percent) || !positive(r.min_concentration) {
                return Err(LabelingError::InvalidCriteria(format!(
                    "non-hemolytic row {r:?} has a nonpositive threshold"
                )));
            }
        }
        for (i, a) in self.hemolytic_rows.iter().enumerate() {
            if self.hemolytic_rows[..i].contains(a) {
                return Err(LabelingError::InvalidCriteria(format!(
                    "duplicate hemolytic row {a:?}"
                )));
            }
        }
        for (i, a) in self.nonhemolytic_rows.iter().enumerate() {
            if self.nonhemolytic_rows[..i].contains(a) {
                return Err(LabelingError::InvalidCriteria(format!(
                    "duplicate non-hemolytic row {a:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, LabelingError> {
        let c: HemolysisCriteria = serde_json::from_str(text)
            .map_err(|e| LabelingError::InvalidCriteria(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Labels one measurement. Hemolytic rows take precedence; bounds are inclusive.
    pub fn classify(&self, hemolysis_percent: f64, concentration: f64) -> Label {
        let hemolytic = self.hemolytic_rows.iter().any(|r| {
            hemolysis_percent >= r.min_hemolysis_percent && concentration <= r.max_concentration
        });
        if hemolytic {
            return Label::Hemolytic;
        }
        let nonhemolytic = self.nonhemolytic_rows.iter().any(|r| {
            hemolysis_percent <= r.max_hemolysis_percent && concentration >= r.min_concentration
        });
        if nonhemolytic {
            Label::NonHemolytic
        } else {
            Label::Indeterminate
        }
    }
}

pub fn classify_record(record: &HemolysisRecord, criteria: &HemolysisCriteria) -> Label {
    criteria.classify(record.hemolysis_percent, record.concentration_um)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndeterminatePolicy {
    #[default]
    Drop,
    CoerceNonHemolytic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub peptide: Peptide,
    pub class: Class,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceCounts {
    pub hemolytic: usize,
    pub nonhemolytic: usize,
    pub indeterminate: usize,
    pub skipped: usize,
}

/// Binary-labeled peptides in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    samples: Vec<Sample>,
    counts: ProvenanceCounts,
}

impl LabeledDataset {
    /// Builds a dataset from already-labeled samples (provenance counts are
    /// the class totals).
    pub fn from_samples(samples: Vec<Sample>) -> Self {
        let hemolytic = samples.iter().filter(|s| s.class.is_positive()).count();
        let counts = ProvenanceCounts {
            hemolytic,
            nonhemolytic: samples.len() - hemolytic,
            indeterminate: 0,
            skipped: 0,
        };
        LabeledDataset { samples, counts }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn counts(&self) -> ProvenanceCounts {
        self.counts
    }

    pub fn with_skipped(mut self, skipped: usize) -> Self {
        self.counts.skipped = skipped;
        self
    }

    pub fn classes(&self) -> Vec<Class> {
        self.samples.iter().map(|s| s.class).collect()
    }

    pub fn peptides(&self) -> impl Iterator<Item = &Peptide> {
        self.samples.iter().map(|s| &s.peptide)
    }

    pub fn class_count(&self, class: Class) -> usize {
        self.samples.iter().filter(|s| s.class == class).count()
    }

    /// Errors unless both classes are present.
    pub fn require_both_classes(&self) -> Result<(), LabelingError> {
        for class in [Class::Hemolytic, Class::NonHemolytic] {
            if self.class_count(class) == 0 {
                return Err(LabelingError::MissingClass(class));
            }
        }
        Ok(())
    }

    /// Subset by sample index, preserving the given order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset::from_samples(indices.iter().map(|&i| self.samples[i].clone()).collect())
    }

    /// CSV with columns `id,sequence,label`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "sequence", "label"]).expect("in-memory write");
        for s in &self.samples {
            w.write_record([s.peptide.id(), s.peptide.sequence(), s.class.as_str()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn from_csv(text: &str) -> Result<Self, LabelingError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| LabelingError::Csv(e.to_string()))?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| LabelingError::Csv(format!("missing column '{name}'")))
        };
        let (id_col, seq_col, label_col) = (col("id")?, col("sequence")?, col("label")?);
        let mut samples = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| LabelingError::Csv(e.to_string()))?;
            let row = rec.position().map_or(0, |p| p.line() as usize);
            let get = |i| rec.get(i).unwrap_or("");
            let peptide = Peptide::new(get(id_col), get(seq_col)).map_err(|e| {
                crate::ingest::IngestError::AtRow {
                    row,
                    source: Box::new(e),
                }
            })?;
            let class = get(label_col)
                .parse()
                .map_err(|_| LabelingError::UnknownLabel {
                    row,
                    value: get(label_col).to_string(),
                })?;
            samples.push(Sample { peptide, class });
        }
        Ok(LabeledDataset::from_samples(samples))
    }
}

/// Labels every record, applying `policy` to indeterminate ones.
///
/// Fails only when nothing survives; single-class results are allowed here
/// (external test sets may be one-sided) and rejected by training entry points.
pub fn build_dataset(
    records: &[HemolysisRecord],
    criteria: &HemolysisCriteria,
    policy: IndeterminatePolicy,
) -> Result<LabeledDataset, LabelingError> {
    if records.is_empty() {
        return Err(LabelingError::EmptyInput);
    }
    let mut counts = ProvenanceCounts::default();
    let mut samples = Vec::with_capacity(records.len());
    for rec in records {
        let label = classify_record(rec, criteria);
        let class = match (label, policy) {
            (Label::Hemolytic, _) => Class::Hemolytic,
            (Label::NonHemolytic, _) => Class::NonHemolytic,
            (Label::Indeterminate, IndeterminatePolicy::Drop) => {
                counts.indeterminate += 1;
                continue;
            }
            (Label::Indeterminate, IndeterminatePolicy::CoerceNonHemolytic) => {
                counts.indeterminate += 1;
                Class::NonHemolytic
            }
        };
        match class {
            Class::Hemolytic => counts.hemolytic += 1,
            Class::NonHemolytic => counts.nonhemolytic += 1,
        }
        samples.push(Sample {
            peptide: rec.peptide.clone(),
            class,
        });
    }
    if samples.is_empty() {
        return Err(LabelingError::NoSamples {
            indeterminate: counts.indeterminate,
        });
    }
    Ok(LabeledDataset { samples, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, hem: f64, conc: f64) -> HemolysisRecord {
        HemolysisRecord::new(Peptide::new(id, "ACD").unwrap(), hem, conc).unwrap()
    }

    #[test]
    fn default_criteria_rows() {
        let c = HemolysisCriteria::default();
        assert_eq!(c.hemolytic_rows.len(), 6);
        assert_eq!(c.nonhemolytic_rows.len(), 7);
        c.validate().unwrap();
    }

    #[test]
    fn classify_examples() {
        let c = HemolysisCriteria::default();
        assert_eq!(classify_record(&rec("a", 50.0, 250.0), &c), Label::Hemolytic);
        assert_eq!(classify_record(&rec("b", 2.0, 10.0), &c), Label::NonHemolytic);
        assert_eq!(classify_record(&rec("c", 4.0, 15.0), &c), Label::Indeterminate);
    }

    #[test]
    fn boundaries_inclusive() {
        let c = HemolysisCriteria::default();
        assert_eq!(c.classify(5.0, 10.0), Label::Hemolytic);
        assert_eq!(c.classify(50.0, 300.0), Label::Hemolytic);
        assert_eq!(c.classify(50.0, 500.0), Label::NonHemolytic);
        assert_eq!(c.classify(50.0, 499.9), Label::Indeterminate);
    }

    #[test]
    fn hemolytic_takes_precedence() {
        // 10% at 20 µM meets hemolytic (>=10, <=20) and non-hemolytic (<=10, >=20)
        let c = HemolysisCriteria::default();
        assert_eq!(c.classify(10.0, 20.0), Label::Hemolytic);
    }

    #[test]
    fn build_dataset_examples() {
        let c = HemolysisCriteria::default();
        let ds = build_dataset(
            &[rec("a", 50.0, 250.0), rec("b", 2.0, 10.0)],
            &c,
            IndeterminatePolicy::Drop,
        )
        .unwrap();
        assert_eq!(ds.classes(), vec![Class::Hemolytic, Class::NonHemolytic]);
        assert_eq!(
            ds.counts(),
            ProvenanceCounts {
                hemolytic: 1,
                nonhemolytic: 1,
                indeterminate: 0,
                skipped: 0
            }
        );

        let ds = build_dataset(
            &[rec("c", 4.0, 15.0)],
            &c,
            IndeterminatePolicy::CoerceNonHemolytic,
        )
        .unwrap();
        assert_eq!(ds.classes(), vec![Class::NonHemolytic]);
        assert_eq!(ds.counts().indeterminate, 1);
        assert!(ds.require_both_classes().is_err());

        assert_eq!(
            build_dataset(&[rec("c", 4.0, 15.0)], &c, IndeterminatePolicy::Drop),
            Err(LabelingError::NoSamples { indeterminate: 1 })
        );
        assert_eq!(
            build_dataset(&[], &c, IndeterminatePolicy::Drop),
            Err(LabelingError::EmptyInput)
        );
    }

    #[test]
    fn criteria_json_override() {
        let json = r#"{"hemolytic_rows":[{"min_hemolysis_percent":50,"max_concentration":100}],
                       "nonhemolytic_rows":[{"max_hemolysis_percent":10,"min_concentration":100}]}"#;
        let c = HemolysisCriteria::from_json(json).unwrap();
        assert_eq!(c.classify(60.0, 50.0), Label::Hemolytic);
        assert_eq!(c.classify(5.0, 15.0), Label::Indeterminate);

        let dup = r#"{"hemolytic_rows":[{"min_hemolysis_percent":5,"max_concentration":1},
                                        {"min_hemolysis_percent":5,"max_concentration":1}],
                      "nonhemolytic_rows":[]}"#;
        assert!(HemolysisCriteria::from_json(dup).is_err());
        let neg = r#"{"hemolytic_rows":[{"min_hemolysis_percent":0,"max_concentration":1}],
                      "nonhemolytic_rows":[]}"#;
        assert!(HemolysisCriteria::from_json(neg).is_err());
    }

    #[test]
    fn labeled_csv_round_trip() {
        let ds = build_dataset(
            &[rec("a", 50.0, 250.0), rec("b", 2.0, 10.0)],
            &HemolysisCriteria::default(),
            IndeterminatePolicy::Drop,
        )
        .unwrap();
        let csv = ds.to_csv();
        assert_eq!(csv, "id,sequence,label\na,ACD,Hemolytic\nb,ACD,NonHemolytic\n");
        assert_eq!(LabeledDataset::from_csv(&csv).unwrap().samples(), ds.samples());
    }

    #[test]
    fn monotone_in_hemolysis() {
        let c = HemolysisCriteria::default();
        let mut conc = 1.0;
        while conc <= 600.0 {
            let mut seen_hemolytic = false;
            for p in 0..=100 {
                let l = c.classify(p as f64, conc);
                if seen_hemolytic {
                    assert_eq!(l, Label::Hemolytic, "p={p} conc={conc}");
                }
                seen_hemolytic |= l == Label::Hemolytic;
            }
            conc += 5.0;
        }
    }

    #[test]
    fn policy_sample_counts() {
        let c = HemolysisCriteria::default();
        let recs: Vec<_> = (0..60)
            .map(|i| rec(&i.to_string(), (i * 7 % 101) as f64, (1 + i * 13 % 600) as f64))
            .collect();
        match build_dataset(&recs, &c, IndeterminatePolicy::Drop) {
            Ok(ds) => assert!(ds.len() <= recs.len()),
            Err(e) => assert!(matches!(e, LabelingError::NoSamples { .. })),
        }
        let ds = build_dataset(&recs, &c, IndeterminatePolicy::CoerceNonHemolytic).unwrap();
        assert_eq!(ds.len(), recs.len());
    }
}
