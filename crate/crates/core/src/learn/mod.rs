//! Classifiers trained from scratch: CART trees, random forests, Newton
//! gradient boosting with logistic loss, and an SMO-trained SVM.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureKind, FeatureMatrix, FeatureVector, FEATURE_DIM};
use crate::labeling::Class;

pub mod boost;
pub mod forest;
pub mod persist;
pub mod svm;
pub mod tree;

pub use boost::{train_gradient_boosting, BoostParams, BoostedModel};
pub use forest::{train_random_forest, ForestModel, ForestParams};
pub use persist::{load_model, model_from_json, model_to_json, save_model, MODEL_FORMAT_VERSION};
pub use svm::{train_svm, Kernel, SvmModel, SvmParams};
pub use tree::{train_decision_tree, TreeModel, TreeNode, TreeParams};

/// Deepest tree accepted, keeping serialized models within JSON nesting limits.
pub const MAX_TREE_DEPTH: usize = 48;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error("training input is empty")]
    EmptyInput,
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("model expects {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("model was trained on {expected} features, got {found}")]
    KindMismatch { expected: FeatureKind, found: FeatureKind },
    #[error("unsupported model format version '{0}'")]
    UnsupportedVersion(String),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("model i/o: {0}")]
    Io(String),
}

pub type Result<T, E = LearnError> = std::result::Result<T, E>;

/// Dense row-major matrix of training inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n_cols: usize,
    values: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if n_cols == 0 || values.len() % n_cols != 0 {
            return Err(LearnError::InvalidParam(format!(
                "{} values do not form rows of width {n_cols}",
                values.len()
            )));
        }
        Ok(DesignMatrix { n_cols, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(LearnError::DimensionMismatch {
                    expected: n_cols,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        if rows.is_empty() {
            return Ok(DesignMatrix { n_cols: 1, values });
        }
        DesignMatrix::new(n_cols, values)
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.n_cols
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn scaled(&self, factor: f64) -> DesignMatrix {
        DesignMatrix {
            n_cols: self.n_cols,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

impl From<&FeatureMatrix> for DesignMatrix {
    fn from(m: &FeatureMatrix) -> Self {
        DesignMatrix {
            n_cols: FEATURE_DIM,
            values: m.rows().iter().flatten().copied().collect(),
        }
    }
}

pub(crate) fn check_training_input(x: &DesignMatrix, y: &[Class]) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(LearnError::EmptyInput);
    }
    if x.n_rows() != y.len() {
        return Err(LearnError::LengthMismatch {
            rows: x.n_rows(),
            labels: y.len(),
        });
    }
    Ok(())
}

pub(crate) fn both_classes(y: &[Class]) -> bool {
    y.iter().any(|c| c.is_positive()) && y.iter().any(|c| !c.is_positive())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Tree,
    Forest,
    Boosted,
    Svm,
}

impl Family {
    /// Row name used in comparison tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Family::Tree => "Decision Tree",
            Family::Forest => "Random Forest",
            Family::Boosted => "Gradient Boosting",
            Family::Svm => "SVM",
        }
    }

    /// Score at or above which a sample is predicted hemolytic.
    pub fn default_threshold(self) -> f64 {
        match self {
            Family::Svm => 0.0,
            _ => 0.5,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Tree => "tree",
            Family::Forest => "forest",
            Family::Boosted => "boosted",
            Family::Svm => "svm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyParams {
    Tree(TreeParams),
    Forest(ForestParams),
    Boosted(BoostParams),
    Svm(SvmParams),
}

/// Model family, its hyperparameters, and the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub params: FamilyParams,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    42
}

impl ModelSpec {
    pub fn forest() -> Self {
        ModelSpec {
            params: FamilyParams::Forest(ForestParams::default()),
            seed: default_seed(),
        }
    }

    pub fn boosted() -> Self {
        ModelSpec {
            params: FamilyParams::Boosted(BoostParams::default()),
            seed: default_seed(),
        }
    }

    pub fn svm() -> Self {
        ModelSpec {
            params: FamilyParams::Svm(SvmParams::default()),
            seed: default_seed(),
        }
    }

    pub fn tree() -> Self {
        ModelSpec {
            params: FamilyParams::Tree(TreeParams::default()),
            seed: default_seed(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn family(&self) -> Family {
        match self.params {
            FamilyParams::Tree(_) => Family::Tree,
            FamilyParams::Forest(_) => Family::Forest,
            FamilyParams::Boosted(_) => Family::Boosted,
            FamilyParams::Svm(_) => Family::Svm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.params {
            FamilyParams::Tree(p) => p.validate(),
            FamilyParams::Forest(p) => p.validate(),
            FamilyParams::Boosted(p) => p.validate(),
            FamilyParams::Svm(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Model {
    Tree(TreeModel),
    Forest(ForestModel),
    Boosted(BoostedModel),
    Svm(SvmModel),
}

/// A fitted model plus the feature contract it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub feature_kind: FeatureKind,
    pub n_features: usize,
    pub seed: u64,
    pub model: Model,
}

impl TrainedModel {
    pub fn family(&self) -> Family {
        match self.model {
            Model::Tree(_) => Family::Tree,
            Model::Forest(_) => Family::Forest,
            Model::Boosted(_) => Family::Boosted,
            Model::Svm(_) => Family::Svm,
        }
    }

    pub fn default_threshold(&self) -> f64 {
        self.family().default_threshold()
    }

    /// Score of a raw input row; no feature-kind check.
    pub fn score_row(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(LearnError::DimensionMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        Ok(match &self.model {
            Model::Tree(m) => m.predict(x),
            Model::Forest(m) => m.predict(x),
            Model::Boosted(m) => m.predict(x),
            Model::Svm(m) => m.decision_value(x),
        })
    }

    pub fn check_kind(&self, kind: FeatureKind) -> Result<()> {
        if kind != self.feature_kind {
            return Err(LearnError::KindMismatch {
                expected: self.feature_kind,
                found: kind,
            });
        }
        Ok(())
    }

    pub fn score_matrix(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_kind(m.kind())?;
        m.rows().iter().map(|r| self.score_row(r)).collect()
    }
}

/// Forest: fraction of trees voting hemolytic. Boosted: probability.
/// SVM: raw decision value.
pub fn predict_score(model: &TrainedModel, x: &FeatureVector) -> Result<f64> {
    model.check_kind(x.kind)?;
    model.score_row(&x.components)
}

/// Trains `spec` on `x`/`y`, tagging the result with `kind`.
pub fn train(spec: &ModelSpec, x: &DesignMatrix, y: &[Class], kind: FeatureKind) -> Result<TrainedModel> {
    spec.validate()?;
    let model = match &spec.params {
        FamilyParams::Tree(p) => Model::Tree(train_decision_tree(x, y, None, p, spec.seed)?),
        FamilyParams::Forest(p) => Model::Forest(train_random_forest(x, y, p, spec.seed)?),
        FamilyParams::Boosted(p) => Model::Boosted(train_gradient_boosting(x, y, p)?),
        FamilyParams::Svm(p) => Model::Svm(train_svm(x, y, p)?),
    };
    Ok(TrainedModel {
        feature_kind: kind,
        n_features: x.n_cols(),
        seed: spec.seed,
        model,
    })
}

pub fn train_on_features(spec: &ModelSpec, m: &FeatureMatrix, y: &[Class]) -> Result<TrainedModel> {
    train(spec, &DesignMatrix::from(m), y, m.kind())
}
