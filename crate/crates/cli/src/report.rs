use std::fs;
use std::path::{Path, PathBuf};

use pepscreen::labeling::ProvenanceCounts;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{io_error, CliError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub samples: usize,
    pub hemolytic: usize,
    pub nonhemolytic: usize,
    pub indeterminate: usize,
    pub skipped: usize,
    pub duplicates_removed: usize,
}

impl DatasetCounts {
    pub fn new(samples: usize, p: ProvenanceCounts, duplicates_removed: usize) -> Self {
        DatasetCounts {
            samples,
            hemolytic: p.hemolytic,
            nonhemolytic: p.nonhemolytic,
            indeterminate: p.indeterminate,
            skipped: p.skipped,
            duplicates_removed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config: RunConfig,
    pub dataset: Option<DatasetCounts>,
    pub results: serde_json::Value,
    pub manifest: Vec<ManifestEntry>,
}

/// Writes artifacts under one directory and records each in a manifest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    manifest: Vec<ManifestEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<OutputDir, CliError> {
        fs::create_dir_all(root).map_err(|e| io_error(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            manifest: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        self.manifest.retain(|m| m.path != name);
        self.manifest.push(ManifestEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(contents.as_bytes())),
            bytes: contents.len(),
        });
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Invariant(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Writes `report_<subcommand>.json`, which is not itself listed.
    pub fn finish(
        self,
        subcommand: &str,
        config: &RunConfig,
        dataset: Option<DatasetCounts>,
        results: serde_json::Value,
    ) -> Result<RunReport, CliError> {
        let report = RunReport {
            tool: "pepscreen".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            config: config.clone(),
            dataset,
            results,
            manifest: self.manifest,
        };
        let path = self.root.join(format!("report_{subcommand}.json"));
        let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Invariant(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| io_error(&path, e))?;
        Ok(report)
    }
}
