//! Command-line pipeline: label, featurize, cluster, split, train, evaluate.
//!
//! Each subcommand reads a JSON [`RunConfig`](config::RunConfig) (optional),
//! applies flag overrides, writes its artifacts under the output directory
//! and finishes with a `report_<subcommand>.json` run report.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pepscreen::features::FeatureKind;
use pepscreen::labeling::IndeterminatePolicy;
use pepscreen::learn::{FamilyParams, ModelSpec};
use pepscreen::simcluster::ClusterScope;

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use config::{RunConfig, SplitMode};
use error::CliError;
use report::{OutputDir, RunReport};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "PEPSCREEN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "pepscreen", version, about = "Peptide hemolysis screening pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label activity records as hemolytic / non-hemolytic
    Label(Overrides),
    /// Write amino-acid composition features
    Featurize(Overrides),
    /// Cumulative explained variance of the feature matrix
    Scree(Overrides),
    /// Single-linkage identity clusters
    Cluster(Overrides),
    /// Stratified k-fold assignment (random and/or cluster level)
    Split(Overrides),
    /// Check that no train/test pair reaches the identity threshold
    VerifySplit(Overrides),
    /// Fit models on the whole dataset and save them
    Train(Overrides),
    /// Cross-validate models and write comparison tables
    Cv(Overrides),
    /// Evaluate a saved model on an independent labeled dataset
    Eval(Overrides),
    /// Score peptides with a saved model
    Predict(Overrides),
}

impl Command {
    fn parts(&self) -> (&'static str, &Overrides) {
        match self {
            Command::Label(o) => ("label", o),
            Command::Featurize(o) => ("featurize", o),
            Command::Scree(o) => ("scree", o),
            Command::Cluster(o) => ("cluster", o),
            Command::Split(o) => ("split", o),
            Command::VerifySplit(o) => ("verify-split", o),
            Command::Train(o) => ("train", o),
            Command::Cv(o) => ("cv", o),
            Command::Eval(o) => ("eval", o),
            Command::Predict(o) => ("predict", o),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Drop,
    CoerceNonHemolytic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    RawCounts,
    UnitNorm,
    UnitL1,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScopeArg {
    PerClass,
    Joint,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Tree,
    Forest,
    Boosted,
    Svm,
}

/// Flags override the matching config-file fields.
#[derive(Debug, Args)]
struct Overrides {
    /// JSON run configuration; a previous run report is accepted too
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    activity_csv: Option<PathBuf>,
    #[arg(long)]
    fasta: Option<PathBuf>,
    /// CSV with id,sequence,label columns
    #[arg(long)]
    labeled_csv: Option<PathBuf>,
    #[arg(long)]
    features_csv: Option<PathBuf>,
    #[arg(long)]
    clusters_csv: Option<PathBuf>,
    #[arg(long)]
    folds_csv: Option<PathBuf>,
    /// Saved model file
    #[arg(long = "model")]
    model_path: Option<PathBuf>,
    /// JSON labeling criteria replacing the default table
    #[arg(long)]
    criteria: Option<PathBuf>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    #[arg(long, value_enum)]
    feature_kind: Option<KindArg>,
    /// Identity threshold for clustering and split verification
    #[arg(long)]
    identity_threshold: Option<f64>,
    #[arg(long, value_enum)]
    scope: Option<ScopeArg>,
    #[arg(long, value_enum)]
    split_mode: Option<SplitMode>,
    #[arg(short, long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Model families with default hyperparameters (repeatable)
    #[arg(long = "family", value_enum)]
    families: Vec<FamilyArg>,
    /// Score at or above which a sample is called hemolytic
    #[arg(long, allow_negative_numbers = true)]
    decision_threshold: Option<f64>,
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Also write ROC and scree TSV files
    #[arg(long)]
    emit_plots_data: bool,
    /// Skip malformed records instead of failing
    #[arg(long)]
    skip_invalid: bool,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {$(
                if let Some(v) = &self.$field {
                    $target = Some(v.clone());
                }
            )*};
        }
        set!(
            activity_csv => cfg.activity_csv,
            fasta => cfg.fasta,
            labeled_csv => cfg.labeled_csv,
            features_csv => cfg.features_csv,
            clusters_csv => cfg.clusters_csv,
            folds_csv => cfg.folds_csv,
            model_path => cfg.model_path,
            criteria => cfg.criteria,
        );
        if let Some(p) = self.policy {
            cfg.indeterminate_policy = match p {
                PolicyArg::Drop => IndeterminatePolicy::Drop,
                PolicyArg::CoerceNonHemolytic => IndeterminatePolicy::CoerceNonHemolytic,
            };
        }
        if let Some(k) = self.feature_kind {
            cfg.feature_kind = match k {
                KindArg::RawCounts => FeatureKind::RawCounts,
                KindArg::UnitNorm => FeatureKind::UnitNorm,
                KindArg::UnitL1 => FeatureKind::UnitL1,
            };
        }
        if let Some(t) = self.identity_threshold {
            cfg.cluster.threshold = t;
        }
        if let Some(s) = self.scope {
            cfg.cluster.scope = match s {
                ScopeArg::PerClass => ClusterScope::PerClass,
                ScopeArg::Joint => ClusterScope::Joint,
            };
        }
        if let Some(m) = self.split_mode {
            cfg.split_mode = m;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if !self.families.is_empty() {
            cfg.models = self
                .families
                .iter()
                .map(|f| match f {
                    FamilyArg::Tree => ModelSpec::tree(),
                    FamilyArg::Forest => ModelSpec::forest(),
                    FamilyArg::Boosted => ModelSpec::boosted(),
                    FamilyArg::Svm => ModelSpec::svm(),
                })
                .map(|s| s.params)
                .collect::<Vec<FamilyParams>>();
        }
        if self.decision_threshold.is_some() {
            cfg.decision_threshold = self.decision_threshold;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        cfg.emit_plots_data |= self.emit_plots_data;
        cfg.skip_invalid |= self.skip_invalid;
        Ok(cfg)
    }
}

/// Runs one subcommand with a resolved config.
pub fn run_subcommand(name: &str, cfg: &RunConfig) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let mut out = OutputDir::create(&cfg.output_dir)?;
    let stage = match name {
        "label" => commands::label,
        "featurize" => commands::featurize,
        "scree" => commands::scree,
        "cluster" => commands::cluster,
        "split" => commands::split,
        "verify-split" => commands::verify_split,
        "train" => commands::train,
        "cv" => commands::cv,
        "eval" => commands::eval,
        "predict" => commands::predict,
        other => return Err(CliError::Usage(format!("unknown subcommand '{other}'"))),
    };
    log::info!("running {name}");
    match stage(cfg, &mut out) {
        Ok((dataset, results)) => out.finish(name, cfg, dataset, results),
        Err(e @ CliError::Invariant(_)) => {
            out.finish(name, cfg, None, serde_json::json!({ "error": e.to_string() }))?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}

/// Parses `args` (program name first), runs, and returns the exit status.
/// Errors go to stderr as a one-line JSON record.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                return 0;
            }
            let msg = e.kind().as_str().unwrap_or("invalid arguments").to_string();
            eprintln!("{}", CliError::Usage(msg).to_json());
            return 1;
        }
    };
    let (name, overrides) = cli.command.parts();
    let result = overrides.resolve().and_then(|cfg| run_subcommand(name, &cfg));
    match result {
        Ok(report) => {
            println!(
                "{name}: wrote {} file(s) to {}",
                report.manifest.len(),
                report.config.output_dir.display()
            );
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

/// Sizes the global worker pool from `PEPSCREEN_THREADS`, if set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Invariant(e.to_string()))
}
