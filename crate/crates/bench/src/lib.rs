//! Shared fixtures for the benchmarks.

use pepscreen::features::{FeatureKind, FeatureMatrix};
use pepscreen::learn::DesignMatrix;
use pepscreen::synth::{generate_corpus, SynthConfig};
use pepscreen::{Class, LabeledDataset};

/// A labeled synthetic corpus with its unit-norm design matrix.
pub struct Fixture {
    pub dataset: LabeledDataset,
    pub features: FeatureMatrix,
    pub design: DesignMatrix,
    pub classes: Vec<Class>,
}

pub fn fixture(n_peptides: usize) -> Fixture {
    let dataset = generate_corpus(&SynthConfig {
        n_peptides,
        ..SynthConfig::default()
    });
    let features = FeatureMatrix::from_dataset(&dataset, FeatureKind::UnitNorm);
    let design = DesignMatrix::from(&features);
    let classes = dataset.classes();
    Fixture {
        dataset,
        features,
        design,
        classes,
    }
}
