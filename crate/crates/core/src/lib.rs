//! Peptide hemolysis screening: activity-record labeling, amino-acid
//! composition features, identity clustering for leakage-free splits,
//! classifiers trained from scratch, and ROC-based evaluation.

pub mod eval;
pub mod features;
pub mod ingest;
pub mod labeling;
pub mod learn;
pub mod simcluster;
pub mod synth;

pub use eval::{CvSummary, EvalError, MetricReport};
pub use features::{FeatureKind, FeatureMatrix, FeatureVector, FEATURE_DIM};
pub use ingest::{HemolysisRecord, IngestError, Peptide};
pub use labeling::{Class, HemolysisCriteria, IndeterminatePolicy, Label, LabeledDataset, LabelingError};
pub use learn::{LearnError, ModelSpec, TrainedModel};
pub use simcluster::{ClusterConfig, ClusterError, ClusterScope, ClusterSet, FoldAssignment};
