//! Peptide and activity-record ingestion from FASTA and CSV.
//!
//! Sequences are restricted to the 20 canonical residues. Input is accepted in
//! any case and stored uppercase. Both `\n` and `\r\n` line endings are handled.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The canonical amino-acid alphabet, in feature order.
pub const ALPHABET: &[u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";

/// Required activity CSV header tokens.
pub const COL_ID: &str = "id";
pub const COL_SEQUENCE: &str = "sequence";
pub const COL_HEMOLYSIS: &str = "hemolysis_percent";
pub const COL_CONCENTRATION: &str = "concentration_um";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("empty sequence")]
    EmptySequence,
    #[error("non-canonical residue '{residue}' at position {position}")]
    InvalidResidue { residue: char, position: usize },
    #[error("line {line}: sequence data before any FASTA header")]
    DataBeforeHeader { line: usize },
    #[error("line {line}: record '{id}' has an empty sequence")]
    EmptyRecord { line: usize, id: String },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<IngestError>,
    },
    #[error("missing required column '{0}'")]
    MissingColumn(&'static str),
    #[error("row {row}: cannot parse {column} value '{value}' as a number")]
    BadNumber {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("row {row}: hemolysis percent {value} outside [0, 100]")]
    HemolysisOutOfRange { row: usize, value: f64 },
    #[error("row {row}: concentration {value} must be positive")]
    NonPositiveConcentration { row: usize, value: f64 },
    #[error("row {row}: {source}")]
    AtRow {
        row: usize,
        #[source]
        source: Box<IngestError>,
    },
    #[error("malformed CSV: {0}")]
    Csv(String),
}

impl IngestError {
    /// True for errors confined to one record, which `skip_invalid` may downgrade.
    pub fn is_record_local(&self) -> bool {
        !matches!(
            self,
            IngestError::DataBeforeHeader { .. }
                | IngestError::MissingColumn(_)
                | IngestError::Csv(_)
        )
    }
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

/// Uppercases `raw` and checks it against the canonical alphabet.
///
/// Positions in errors are 1-based.
pub fn validate_sequence(raw: &str) -> Result<String> {
    if raw.is_empty() {
        return Err(IngestError::EmptySequence);
    }
    let mut out = String::with_capacity(raw.len());
    for (i, c) in raw.chars().enumerate() {
        let up = c.to_ascii_uppercase();
        if !up.is_ascii() || !ALPHABET.contains(&(up as u8)) {
            return Err(IngestError::InvalidResidue {
                residue: c,
                position: i + 1,
            });
        }
        out.push(up);
    }
    Ok(out)
}

/// A validated peptide: identifier plus canonical uppercase sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPeptide")]
pub struct Peptide {
    id: String,
    sequence: String,
}

#[derive(Deserialize)]
struct RawPeptide {
    id: String,
    sequence: String,
}

impl TryFrom<RawPeptide> for Peptide {
    type Error = IngestError;

    fn try_from(raw: RawPeptide) -> Result<Self> {
        Peptide::new(raw.id, &raw.sequence)
    }
}

impl Peptide {
    pub fn new(id: impl Into<String>, sequence: &str) -> Result<Self> {
        Ok(Peptide {
            id: id.into(),
            sequence: validate_sequence(sequence)?,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn sequence(&self) -> &str {
        &self.sequence
    }

    pub fn residues(&self) -> &[u8] {
        self.sequence.as_bytes()
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }
}

impl fmt::Display for Peptide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.id, self.sequence)
    }
}

/// One hemolysis assay: peptide, percent lysis, and concentration in µM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HemolysisRecord {
    pub peptide: Peptide,
    pub hemolysis_percent: f64,
    pub concentration_um: f64,
}

impl HemolysisRecord {
    pub fn new(peptide: Peptide, hemolysis_percent: f64, concentration_um: f64) -> Result<Self> {
        check_hemolysis(hemolysis_percent, 0)?;
        check_concentration(concentration_um, 0)?;
        Ok(HemolysisRecord {
            peptide,
            hemolysis_percent,
            concentration_um,
        })
    }
}

fn check_hemolysis(value: f64, row: usize) -> Result<()> {
    if !(0.0..=100.0).contains(&value) {
        return Err(IngestError::HemolysisOutOfRange { row, value });
    }
    Ok(())
}

fn check_concentration(value: f64, row: usize) -> Result<()> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(IngestError::NonPositiveConcentration { row, value });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Count and drop records with record-local errors instead of failing.
    pub skip_invalid: bool,
}

/// Parse result with the bookkeeping the pipeline reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    /// Record-local errors that were skipped (only with `skip_invalid`).
    pub skipped: Vec<IngestError>,
    /// Records whose id had already been seen.
    pub duplicate_ids: usize,
    /// Exact duplicate assays removed (activity CSV only).
    pub duplicates_removed: usize,
}

impl<T> Parsed<T> {
    fn new() -> Self {
        Parsed {
            records: Vec::new(),
            skipped: Vec::new(),
            duplicate_ids: 0,
            duplicates_removed: 0,
        }
    }
}

/// Strict FASTA parse: any error aborts.
pub fn parse_fasta(text: &str) -> Result<Vec<Peptide>> {
    parse_fasta_with(text, ParseOptions::default()).map(|p| p.records)
}

pub fn parse_fasta_with(text: &str, opts: ParseOptions) -> Result<Parsed<Peptide>> {
    struct Pending {
        id: String,
        header_line: usize,
        seq: String,
        // first invalid residue, positioned by line
        error: Option<IngestError>,
    }

    let mut out = Parsed::new();
    let mut seen = HashSet::new();
    let mut current: Option<Pending> = None;

    let mut finish = |p: Pending, out: &mut Parsed<Peptide>| -> Result<()> {
        let res = match p.error {
            Some(e) => Err(e),
            None if p.seq.is_empty() => Err(IngestError::EmptyRecord {
                line: p.header_line,
                id: p.id.clone(),
            }),
            None => Ok(Peptide {
                id: p.id,
                sequence: p.seq,
            }),
        };
        match res {
            Ok(pep) => {
                if !seen.insert(pep.id.clone()) {
                    out.duplicate_ids += 1;
                }
                out.records.push(pep);
                Ok(())
            }
            Err(e) if opts.skip_invalid => {
                out.skipped.push(e);
                Ok(())
            }
            Err(e) => Err(e),
        }
    };

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim_end_matches('\r');
        if let Some(header) = line.strip_prefix('>') {
            if let Some(p) = current.take() {
                finish(p, &mut out)?;
            }
            let id = header.split_whitespace().next().unwrap_or("").to_string();
            current = Some(Pending {
                id,
                header_line: line_no,
                seq: String::new(),
                error: None,
            });
            continue;
        }
        let data = line.trim();
        if data.is_empty() {
            continue;
        }
        let Some(p) = current.as_mut() else {
            return Err(IngestError::DataBeforeHeader { line: line_no });
        };
        if p.error.is_some() {
            continue;
        }
        for (col, c) in data.chars().enumerate() {
            let up = c.to_ascii_uppercase();
            if up.is_ascii() && ALPHABET.contains(&(up as u8)) {
                p.seq.push(up);
            } else {
                p.error = Some(IngestError::AtLine {
                    line: line_no,
                    source: Box::new(IngestError::InvalidResidue {
                        residue: c,
                        position: col + 1,
                    }),
                });
                break;
            }
        }
    }
    if let Some(p) = current.take() {
        finish(p, &mut out)?;
    }
    Ok(out)
}

/// Writes peptides as FASTA, wrapping sequence lines at 60 residues.
pub fn write_fasta<'a>(peptides: impl IntoIterator<Item = &'a Peptide>) -> String {
    let mut s = String::new();
    for p in peptides {
        s.push('>');
        s.push_str(&p.id);
        s.push('\n');
        for chunk in p.sequence.as_bytes().chunks(60) {
            // chunks of an ASCII string are valid UTF-8
            s.push_str(std::str::from_utf8(chunk).unwrap());
            s.push('\n');
        }
    }
    s
}

/// Strict activity CSV parse (exact duplicate assays are still removed).
pub fn parse_activity_csv(text: &str) -> Result<Vec<HemolysisRecord>> {
    parse_activity_csv_with(text, ParseOptions::default()).map(|p| p.records)
}

pub fn parse_activity_csv_with(text: &str, opts: ParseOptions) -> Result<Parsed<HemolysisRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(text.trim_start_matches('\u{feff}').as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| IngestError::Csv(e.to_string()))?
        .clone();
    let find = |name: &'static str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(IngestError::MissingColumn(name))
    };
    let id_col = find(COL_ID)?;
    let seq_col = find(COL_SEQUENCE)?;
    let hem_col = find(COL_HEMOLYSIS)?;
    let conc_col = find(COL_CONCENTRATION)?;

    let mut out = Parsed::new();
    let mut seen_ids = HashSet::new();
    let mut seen_assays: HashSet<(String, u64, u64)> = HashSet::new();

    for result in reader.records() {
        let record = result.map_err(|e| IngestError::Csv(e.to_string()))?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let parsed = parse_activity_row(&record, row, id_col, seq_col, hem_col, conc_col);
        let rec = match parsed {
            Ok(r) => r,
            Err(e) if opts.skip_invalid => {
                out.skipped.push(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let key = (
            rec.peptide.sequence.clone(),
            rec.hemolysis_percent.to_bits(),
            rec.concentration_um.to_bits(),
        );
        if !seen_assays.insert(key) {
            log::warn!(
                "row {row}: duplicate assay for '{}' removed",
                rec.peptide.id
            );
            out.duplicates_removed += 1;
            continue;
        }
        if !seen_ids.insert(rec.peptide.id.clone()) {
            out.duplicate_ids += 1;
        }
        out.records.push(rec);
    }
    if out.duplicate_ids > 0 {
        log::info!("{} records reuse an earlier id", out.duplicate_ids);
    }
    Ok(out)
}

fn parse_activity_row(
    record: &csv::StringRecord,
    row: usize,
    id_col: usize,
    seq_col: usize,
    hem_col: usize,
    conc_col: usize,
) -> Result<HemolysisRecord> {
    let field = |i: usize| record.get(i).unwrap_or("");
    let number = |i: usize, column: &'static str| -> Result<f64> {
        let raw = field(i);
        raw.parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .ok_or_else(|| IngestError::BadNumber {
                row,
                column,
                value: raw.to_string(),
            })
    };
    let sequence = validate_sequence(field(seq_col)).map_err(|e| IngestError::AtRow {
        row,
        source: Box::new(e),
    })?;
    let hemolysis_percent = number(hem_col, COL_HEMOLYSIS)?;
    check_hemolysis(hemolysis_percent, row)?;
    let concentration_um = number(conc_col, COL_CONCENTRATION)?;
    check_concentration(concentration_um, row)?;
    Ok(HemolysisRecord {
        peptide: Peptide {
            id: field(id_col).to_string(),
            sequence,
        },
        hemolysis_percent,
        concentration_um,
    })
}

/// Serializes records back to the activity CSV layout.
pub fn write_activity_csv<'a>(records: impl IntoIterator<Item = &'a HemolysisRecord>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([COL_ID, COL_SEQUENCE, COL_HEMOLYSIS, COL_CONCENTRATION])
        .expect("in-memory write");
    for r in records {
        w.write_record([
            r.peptide.id.as_str(),
            r.peptide.sequence.as_str(),
            &r.hemolysis_percent.to_string(),
            &r.concentration_um.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
