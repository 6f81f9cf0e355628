use std::path::{Path, PathBuf};

use pepscreen::features::FeatureKind;
use pepscreen::labeling::IndeterminatePolicy;
use pepscreen::learn::{FamilyParams, ModelSpec};
use pepscreen::simcluster::{ClusterConfig, FoldGranularity};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Random,
    Cluster,
    Both,
}

/// A single split strategy; `Both` expands to these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Random,
    Cluster,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Random => "random",
            Split::Cluster => "cluster",
        }
    }

    pub fn granularity(self) -> FoldGranularity {
        match self {
            Split::Random => FoldGranularity::SampleLevel,
            Split::Cluster => FoldGranularity::ClusterLevel,
        }
    }
}

impl SplitMode {
    pub fn splits(self) -> Vec<Split> {
        match self {
            SplitMode::Random => vec![Split::Random],
            SplitMode::Cluster => vec![Split::Cluster],
            SplitMode::Both => vec![Split::Random, Split::Cluster],
        }
    }
}

/// Every setting a stage may read. Unset paths mean "not supplied".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub activity_csv: Option<PathBuf>,
    pub fasta: Option<PathBuf>,
    pub labeled_csv: Option<PathBuf>,
    pub features_csv: Option<PathBuf>,
    pub clusters_csv: Option<PathBuf>,
    pub folds_csv: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub criteria: Option<PathBuf>,
    pub indeterminate_policy: IndeterminatePolicy,
    pub feature_kind: FeatureKind,
    pub cluster: ClusterConfig,
    pub split_mode: SplitMode,
    pub k: usize,
    pub seed: u64,
    /// Model families and hyperparameters; the master seed is applied to each.
    pub models: Vec<FamilyParams>,
    /// Candidates for nested cross-validated grid search; empty disables it.
    pub grid: Vec<FamilyParams>,
    pub inner_k: usize,
    pub decision_threshold: Option<f64>,
    pub output_dir: PathBuf,
    pub emit_plots_data: bool,
    pub skip_invalid: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            activity_csv: None,
            fasta: None,
            labeled_csv: None,
            features_csv: None,
            clusters_csv: None,
            folds_csv: None,
            model_path: None,
            criteria: None,
            indeterminate_policy: IndeterminatePolicy::default(),
            feature_kind: FeatureKind::default(),
            cluster: ClusterConfig::default(),
            split_mode: SplitMode::Random,
            k: 10,
            seed: 42,
            models: [ModelSpec::forest(), ModelSpec::boosted(), ModelSpec::svm()]
                .into_iter()
                .map(|s| s.params)
                .collect(),
            grid: Vec::new(),
            inner_k: 3,
            decision_threshold: None,
            output_dir: PathBuf::from("pepscreen-out"),
            emit_plots_data: false,
            skip_invalid: false,
        }
    }
}

impl RunConfig {
    /// Reads a config file. A previous run report is accepted too, in which
    /// case its config echo is used.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
        let mut value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        if value.get("manifest").is_some() {
            if let Some(cfg) = value.get_mut("config") {
                value = cfg.take();
            }
        }
        serde_json::from_value(value).map_err(|e| CliError::Usage(format!("invalid config field: {e}")))
    }

    pub fn model_specs(&self) -> Vec<ModelSpec> {
        self.models
            .iter()
            .map(|p| ModelSpec {
                params: p.clone(),
                seed: self.seed,
            })
            .collect()
    }

    pub fn grid_specs(&self) -> Vec<ModelSpec> {
        self.grid
            .iter()
            .map(|p| ModelSpec {
                params: p.clone(),
                seed: self.seed,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.k < 2 {
            return Err(CliError::field("k", format!("must be >= 2, got {}", self.k)));
        }
        if !self.grid.is_empty() && self.inner_k < 2 {
            return Err(CliError::field("inner_k", format!("must be >= 2, got {}", self.inner_k)));
        }
        self.cluster
            .validate()
            .map_err(|e| CliError::field("cluster.threshold", e.to_string()))?;
        if let Some(t) = self.decision_threshold {
            if !t.is_finite() {
                return Err(CliError::field("decision_threshold", "must be finite"));
            }
        }
        for spec in self.model_specs().iter().chain(&self.grid_specs()) {
            spec.validate()
                .map_err(|e| CliError::field("models", e.to_string()))?;
        }
        for (name, path) in self.input_paths() {
            if !path.exists() {
                return Err(CliError::Data(format!("{name}: {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    fn input_paths(&self) -> Vec<(&'static str, &Path)> {
        [
            ("activity_csv", &self.activity_csv),
            ("fasta", &self.fasta),
            ("labeled_csv", &self.labeled_csv),
            ("features_csv", &self.features_csv),
            ("clusters_csv", &self.clusters_csv),
            ("folds_csv", &self.folds_csv),
            ("model_path", &self.model_path),
            ("criteria", &self.criteria),
        ]
        .into_iter()
        .filter_map(|(n, p)| p.as_deref().map(|p| (n, p)))
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_partial_json() {
        let cfg: RunConfig = serde_json::from_str(r#"{"k": 5, "split_mode": "both"}"#).unwrap();
        assert_eq!(cfg.k, 5);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.split_mode.splits(), vec![Split::Random, Split::Cluster]);
        assert_eq!(cfg.models.len(), 3);
        assert!(serde_json::from_str::<RunConfig>(r#"{"kk": 5}"#).is_err());
    }

    #[test]
    fn validation_names_field() {
        let cfg = RunConfig {
            k: 1,
            ..RunConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("k"));
        assert_eq!(err.exit_code(), 1);
    }
}
