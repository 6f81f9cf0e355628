//! Seeded synthetic peptide corpora with class-dependent residue bias and
//! families of near-duplicate sequences.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{HemolysisRecord, Peptide, ALPHABET};
use crate::labeling::{Class, LabeledDataset, Sample};

/// Cationic and hydrophobic residues, over-represented in hemolytic peptides.
const HEMOLYTIC_RICH: &[u8] = b"KLWFIR";
/// Acidic and small polar residues, over-represented in the other class.
const BENIGN_RICH: &[u8] = b"DESGNQ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_peptides: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Fraction of peptides drawn as hemolytic.
    pub positive_fraction: f64,
    /// 0 gives identical composition for both classes.
    pub bias: f64,
    /// Members per family are drawn uniformly from `1..=max_family_size`.
    pub max_family_size: usize,
    /// Per-residue substitution probability within a family.
    pub mutation_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_peptides: 400,
            min_len: 5,
            max_len: 40,
            positive_fraction: 0.5,
            bias: 0.3,
            max_family_size: 4,
            mutation_rate: 0.15,
            seed: 42,
        }
    }
}

fn profile(class: Class, bias: f64) -> WeightedIndex<f64> {
    let rich = match class {
        Class::Hemolytic => HEMOLYTIC_RICH,
        Class::NonHemolytic => BENIGN_RICH,
    };
    let weights = ALPHABET.iter().map(|r| if rich.contains(r) { 1.0 + 4.0 * bias } else { 1.0 });
    WeightedIndex::new(weights).expect("positive weights")
}

/// Labeled peptides; ids are `syn0000`, `syn0001`, ...
pub fn generate_corpus(cfg: &SynthConfig) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (lo, hi) = (cfg.min_len.max(1), cfg.max_len.max(cfg.min_len.max(1)));
    let profiles = [profile(Class::NonHemolytic, cfg.bias), profile(Class::Hemolytic, cfg.bias)];
    let mut samples = Vec::with_capacity(cfg.n_peptides);
    while samples.len() < cfg.n_peptides {
        let class = Class::from_positive(rng.random_bool(cfg.positive_fraction.clamp(0.0, 1.0)));
        let dist = &profiles[class.as_index()];
        let len = rng.random_range(lo..=hi);
        let base: Vec<u8> = (0..len).map(|_| ALPHABET[dist.sample(&mut rng)]).collect();
        let members = rng.random_range(1..=cfg.max_family_size.max(1));
        for _ in 0..members {
            if samples.len() == cfg.n_peptides {
                break;
            }
            let seq: Vec<u8> = base
                .iter()
                .map(|&r| {
                    if rng.random_bool(cfg.mutation_rate.clamp(0.0, 1.0)) {
                        ALPHABET[dist.sample(&mut rng)]
                    } else {
                        r
                    }
                })
                .collect();
            let id = format!("syn{:04}", samples.len());
            let seq = String::from_utf8(seq).expect("ascii residues");
            samples.push(Sample {
                peptide: Peptide::new(id, &seq).expect("alphabet residues"),
                class,
            });
        }
    }
    LabeledDataset::from_samples(samples)
}

/// Activity records whose measurements fall clearly inside the default
/// criteria for each sample's class.
pub fn generate_records(cfg: &SynthConfig) -> Vec<HemolysisRecord> {
    let dataset = generate_corpus(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    dataset
        .samples()
        .iter()
        .map(|s| {
            let (pct, conc) = match s.class {
                Class::Hemolytic => (rng.random_range(30.0..95.0), rng.random_range(1.0..10.0)),
                Class::NonHemolytic => (rng.random_range(0.0..1.5), rng.random_range(50.0..500.0)),
            };
            // two decimals keeps CSV round trips exact
            let round = |v: f64| (v * 100.0).round() / 100.0;
            HemolysisRecord::new(s.peptide.clone(), round(pct), round(conc)).expect("valid measurements")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::{build_dataset, HemolysisCriteria, IndeterminatePolicy};

    #[test]
    fn deterministic_and_sized() {
        let cfg = SynthConfig {
            n_peptides: 57,
            ..SynthConfig::default()
        };
        let a = generate_corpus(&cfg);
        assert_eq!(a.len(), 57);
        assert_eq!(a, generate_corpus(&cfg));
        assert!(a.peptides().all(|p| (5..=40).contains(&p.len())));
        assert!(a.class_count(Class::Hemolytic) > 0 && a.class_count(Class::NonHemolytic) > 0);
    }

    #[test]
    fn records_label_back_to_their_class() {
        let cfg = SynthConfig {
            n_peptides: 120,
            ..SynthConfig::default()
        };
        let records = generate_records(&cfg);
        let labeled = build_dataset(&records, &HemolysisCriteria::default(), IndeterminatePolicy::Drop).unwrap();
        assert_eq!(labeled.classes(), generate_corpus(&cfg).classes());
    }
}
