use std::collections::HashMap;
use std::fs;
use std::path::Path;

use pepscreen::eval::{
    comparison_csv, cross_validate, evaluate_external, nested_cross_validate, roc_tsv, ComparisonRow, CvSummary,
    InnerSplit, NestedCvSummary,
};
use pepscreen::features::{pca_cumulative_variance, scree_tsv, FeatureMatrix};
use pepscreen::ingest::{parse_activity_csv_with, parse_fasta_with, ParseOptions, Peptide};
use pepscreen::labeling::{build_dataset, HemolysisCriteria, LabeledDataset};
use pepscreen::learn::{load_model, model_to_json, train_on_features, Family, TrainedModel};
use pepscreen::simcluster::{
    build_clusters, cluster_stratified_kfold, sample_stratified_kfold, verify_folds, ClusterSet, FoldAssignment,
};
use pepscreen::Class;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RunConfig, Split};
use crate::error::{io_error, CliError};
use crate::report::{DatasetCounts, OutputDir};

pub type StageResult = Result<(Option<DatasetCounts>, Value), CliError>;

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn parse_options(cfg: &RunConfig) -> ParseOptions {
    ParseOptions {
        skip_invalid: cfg.skip_invalid,
    }
}

fn log_skipped<E: std::fmt::Display>(skipped: &[E]) {
    for e in skipped {
        log::warn!("skipped: {e}");
    }
}

fn labeled_from_activity(cfg: &RunConfig, path: &Path) -> Result<(LabeledDataset, DatasetCounts), CliError> {
    let criteria = match &cfg.criteria {
        Some(p) => HemolysisCriteria::from_json(&read(p)?)?,
        None => HemolysisCriteria::default(),
    };
    let parsed = parse_activity_csv_with(&read(path)?, parse_options(cfg))?;
    log_skipped(&parsed.skipped);
    let dataset = build_dataset(&parsed.records, &criteria, cfg.indeterminate_policy)?.with_skipped(parsed.skipped.len());
    let counts = DatasetCounts::new(dataset.len(), dataset.counts(), parsed.duplicates_removed);
    Ok((dataset, counts))
}

/// Labeled samples from `labeled_csv`, else from `activity_csv`.
pub fn load_labeled(cfg: &RunConfig) -> Result<(LabeledDataset, DatasetCounts), CliError> {
    if let Some(p) = &cfg.labeled_csv {
        let dataset = LabeledDataset::from_csv(&read(p)?)?;
        let counts = DatasetCounts::new(dataset.len(), dataset.counts(), 0);
        return Ok((dataset, counts));
    }
    if let Some(p) = &cfg.activity_csv {
        return labeled_from_activity(cfg, p);
    }
    Err(CliError::Usage(
        "no labeled input: set labeled_csv or activity_csv".into(),
    ))
}

/// Peptides with labels when available; FASTA input is unlabeled.
/// Peptides with their labels when the input carries them.
type LoadedPeptides = (Vec<Peptide>, Option<Vec<Class>>, Option<DatasetCounts>);

fn load_peptides(cfg: &RunConfig) -> Result<LoadedPeptides, CliError> {
    if cfg.labeled_csv.is_some() || cfg.activity_csv.is_some() {
        let (d, counts) = load_labeled(cfg)?;
        return Ok((d.peptides().cloned().collect(), Some(d.classes()), Some(counts)));
    }
    if let Some(p) = &cfg.fasta {
        let parsed = parse_fasta_with(&read(p)?, parse_options(cfg))?;
        log_skipped(&parsed.skipped);
        return Ok((parsed.records, None, None));
    }
    Err(CliError::Usage(
        "no peptide input: set labeled_csv, activity_csv or fasta".into(),
    ))
}

/// Features from `features_csv` (ids must match the dataset order) or
/// computed from the sequences.
fn load_features(cfg: &RunConfig, ids: &[&str], peptides: &[Peptide]) -> Result<FeatureMatrix, CliError> {
    match &cfg.features_csv {
        Some(p) => {
            let (file_ids, m) = FeatureMatrix::from_csv(&read(p)?, cfg.feature_kind)?;
            if file_ids.len() != ids.len() || file_ids.iter().zip(ids).any(|(a, b)| a != b) {
                return Err(CliError::Data(format!(
                    "{}: ids do not match the dataset order",
                    p.display()
                )));
            }
            Ok(m)
        }
        None => Ok(FeatureMatrix::from_peptides(peptides.iter(), cfg.feature_kind)),
    }
}

fn dataset_features(cfg: &RunConfig, d: &LabeledDataset) -> Result<FeatureMatrix, CliError> {
    let peptides: Vec<Peptide> = d.peptides().cloned().collect();
    let ids: Vec<&str> = peptides.iter().map(Peptide::id).collect();
    load_features(cfg, &ids, &peptides)
}

fn clusters_for(cfg: &RunConfig, d: &LabeledDataset) -> Result<ClusterSet, CliError> {
    Ok(match &cfg.clusters_csv {
        Some(p) => ClusterSet::from_csv(&read(p)?, d, &cfg.cluster)?,
        None => build_clusters(d, &cfg.cluster)?,
    })
}

fn folds_for(cfg: &RunConfig, d: &LabeledDataset, split: Split) -> Result<FoldAssignment, CliError> {
    if let Some(p) = &cfg.folds_csv {
        return Ok(FoldAssignment::from_csv(&read(p)?, d, split.granularity(), cfg.seed)?);
    }
    Ok(match split {
        Split::Random => sample_stratified_kfold(d, cfg.k, cfg.seed)?,
        Split::Cluster => cluster_stratified_kfold(&clusters_for(cfg, d)?, cfg.k, cfg.seed)?,
    })
}

fn splits(cfg: &RunConfig) -> Result<Vec<Split>, CliError> {
    let splits = cfg.split_mode.splits();
    if cfg.folds_csv.is_some() && splits.len() > 1 {
        return Err(CliError::field(
            "split_mode",
            "a single folds_csv needs split_mode random or cluster",
        ));
    }
    Ok(splits)
}

/// File-name stems per model, suffixed when a family repeats.
fn model_names(families: &[Family]) -> Vec<String> {
    let mut seen: HashMap<Family, usize> = HashMap::new();
    families
        .iter()
        .map(|f| {
            let n = seen.entry(*f).or_insert(0);
            *n += 1;
            let total = families.iter().filter(|g| *g == f).count();
            if total > 1 {
                format!("{f}_{n}")
            } else {
                f.to_string()
            }
        })
        .collect()
}

pub fn label(cfg: &RunConfig, out: &mut OutputDir) -> StageResult {
    let Some(path) = &cfg.activity_csv else {
        return Err(CliError::Usage("label needs activity_csv".into()));
    };
    let (d, counts) = labeled_from_activity(cfg, path)?;
    out.write("labeled.csv", &d.to_csv())?;
    let results = json!({ "hemolytic": counts.hemolytic, "nonhemolytic": counts.nonhemolytic });
    Ok((Some(counts), results))
}

pub fn featurize(cfg: &RunConfig, out: &mut OutputDir) -> StageResult {
    let (peptides, labels, counts) = load_peptides(cfg)?;
    let m = FeatureMatrix::from_peptides(peptides.iter(), cfg.feature_kind);
    let ids: Vec<&str> = peptides.iter().map(Peptide::id).collect();
    out.write("features.csv", &m.to_csv(&ids, labels.as_deref()))?;
    if cfg.emit_plots_data && m.len() >= 2 {
        out.write("scree.tsv", &scree_tsv(&pca_cumulative_variance(&m)?))?;
    }
    Ok((counts, json!({ "rows": m.len(), "feature_kind": m.kind() })))
}

pub fn scree(cfg: &RunConfig, out: &mut OutputDir) -> StageResult {
    let (m, counts) = match &cfg.features_csv {
        Some(p) => (FeatureMatrix::from_csv(&read(p)?, cfg.feature_kind)?.1, None),
        None => {
            let (peptides, _, counts) = load_peptides(cfg)?;
            (FeatureMatrix::from_peptides(peptides.iter(), cfg.feature_kind), counts)
        }
    };
    let cumulative = pca_cumulative_variance(&m)?;
    out.write("scree.tsv", &scree_tsv(&cumulative))?;
    Ok((counts, json!({ "cumulative_variance": cumulative.to_vec() })))
}

pub fn cluster(cfg: &RunConfig, out: &mut OutputDir) -> StageResult {
    let (d, counts) = load_labeled(cfg)?;
    let set = build_clusters(&d, &cfg.cluster)?;
    out.write("clusters.csv", &set.to_csv(&d))?;
    let results = json!({
        "threshold": set.threshold,
        "scope": set.scope,
        "clusters": {
            "hemolytic": set.count_by_class(Class::Hemolytic),
            "nonhemolytic": set.count_by_class(Class::NonHemolytic),
        },
        "largest": set.clusters.iter().map(|c| c.members.len()).max().unwrap_or(0),
    });
    Ok((Some(counts), results))
}

pub fn split(cfg: &RunConfig, out: &mut OutputDir) -> StageResult {
    let (d, counts) = load_labeled(cfg)?;
    let mut results = serde_json::Map::new();
    for s in splits(cfg)? {
        let folds = folds_for(cfg, &d, s)?;
        out.write(&format!("folds_{}.csv", s.as_str()), &folds.to_csv(&d))?;
        results.insert(s.as_str().into(), json!({ "k": folds.k, "fold_sizes": folds.fold_sizes() }));
    }
    Ok((Some(counts), Value::Object(results)))
}

pub fn verify_split(cfg: &RunConfig, out: &mut OutputDir) -> StageResult {
    let (d, counts) = load_labeled(cfg)?;
    let mut results = serde_json::Map::new();
    let mut failures = Vec::new();
    for s in splits(cfg)? {
        let folds = folds_for(cfg, &d, s)?;
        let checks = verify_folds(&d, &folds, cfg.cluster.threshold, cfg.cluster.scope)?;
        out.write_json(&format!("verify_{}.json", s.as_str()), &checks)?;
        for c in checks.iter().filter(|c| !c.pass) {
            let worst = c
                .checks
                .iter()
                .map(|(_, sc)| sc)
                .max_by(|a, b| a.max_identity.total_cmp(&b.max_identity))
                .expect("failing fold has a check");
            failures.push(format!(
                "{} fold {}: {} vs {} at identity {}",
                s.as_str(),
                c.fold,
                worst.argmax_pair.0,
                worst.argmax_pair.1,
                worst.max_identity
            ));
        }
        results.insert(
            s.as_str().into(),
            json!({ "pass": checks.iter().all(|c| c.pass), "folds": checks.len() }),
        );
    }
    if !failures.is_empty() {
        return Err(CliError::Invariant(format!(
            "split leaks similar sequences: {}",
            failures.join("; ")
        )));
    }
    Ok((Some(counts), Value::Object(results)))
}

pub fn train(cfg: &RunConfig, out: &mut OutputDir) -> StageResult {
    let (d, counts) = load_labeled(cfg)?;
    let x = dataset_features(cfg, &d)?;
    let specs = cfg.model_specs();
    let names = model_names(&specs.iter().map(|s| s.family()).collect::<Vec<_>>());
    let mut files = Vec::new();
    for (spec, name) in specs.iter().zip(&names) {
        let model = train_on_features(spec, &x, &d.classes())?;
        let file = format!("model_{name}.json");
        out.write(&file, &model_to_json(&model)?)?;
        files.push(file);
    }
    Ok((Some(counts), json!({ "models": files })))
}

#[derive(Debug, Serialize)]
struct SplitExperiment {
    split: Split,
    models: Vec<CvSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nested: Option<NestedCvSummary>,
}

#[derive(Debug, Serialize)]
struct CvDocument {
    n_samples: usize,
    n_hemolytic: usize,
    n_nonhemolytic: usize,
    feature_kind: pepscreen::FeatureKind,
    experiments: Vec<SplitExperiment>,
}

pub fn cv(cfg: &RunConfig, out: &mut OutputDir) -> StageResult {
    let (d, counts) = load_labeled(cfg)?;
    let x = dataset_features(cfg, &d)?;
    let specs = cfg.model_specs();
    let names = model_names(&specs.iter().map(|s| s.family()).collect::<Vec<_>>());
    let mut experiments = Vec::new();
    for s in splits(cfg)? {
        let folds = folds_for(cfg, &d, s)?;
        log::info!("{} split: fold sizes {:?}", s.as_str(), folds.fold_sizes());
        let mut models = Vec::new();
        let mut rows = Vec::new();
        for (spec, name) in specs.iter().zip(&names) {
            let summary = cross_validate(&d, &x, &folds, spec, cfg.decision_threshold)?;
            rows.push(ComparisonRow::from_cv(spec.family().display_name(), &summary.stats));
            if cfg.emit_plots_data {
                for f in &summary.folds {
                    out.write(
                        &format!("roc/{}_{name}_fold{:02}.tsv", s.as_str(), f.fold),
                        &roc_tsv(&f.report.roc_points),
                    )?;
                }
            }
            models.push(summary);
        }
        let nested = if cfg.grid.is_empty() {
            None
        } else {
            let inner = match s {
                Split::Random => InnerSplit::Random,
                Split::Cluster => InnerSplit::Cluster(cfg.cluster),
            };
            let n = nested_cross_validate(&d, &x, &folds, &cfg.grid_specs(), cfg.inner_k, &inner)?;
            rows.push(ComparisonRow::from_cv("Nested grid search", &n.stats));
            Some(n)
        };
        out.write(&format!("comparison_{}.csv", s.as_str()), &comparison_csv(&rows))?;
        experiments.push(SplitExperiment {
            split: s,
            models,
            nested,
        });
    }
    if cfg.emit_plots_data && x.len() >= 2 {
        out.write("scree.tsv", &scree_tsv(&pca_cumulative_variance(&x)?))?;
    }
    let results = json!({ "split_gap": split_gap(&experiments) });
    out.write_json(
        "cv_summary.json",
        &CvDocument {
            n_samples: d.len(),
            n_hemolytic: d.class_count(Class::Hemolytic),
            n_nonhemolytic: d.class_count(Class::NonHemolytic),
            feature_kind: x.kind(),
            experiments,
        },
    )?;
    Ok((Some(counts), results))
}

/// Mean AUC under random minus cluster split, per model, when both ran.
fn split_gap(experiments: &[SplitExperiment]) -> Value {
    let find = |s: Split| experiments.iter().find(|e| e.split == s);
    let (Some(r), Some(c)) = (find(Split::Random), find(Split::Cluster)) else {
        return Value::Null;
    };
    r.models
        .iter()
        .zip(&c.models)
        .map(|(a, b)| {
            let gap = match (a.stats.auc.mean, b.stats.auc.mean) {
                (Some(x), Some(y)) => json!(x - y),
                _ => Value::Null,
            };
            json!({
                "model": a.family.display_name(),
                "random_auc": a.stats.auc.mean,
                "cluster_auc": b.stats.auc.mean,
                "gap": gap,
            })
        })
        .collect()
}

fn load_trained(cfg: &RunConfig) -> Result<TrainedModel, CliError> {
    let Some(p) = &cfg.model_path else {
        return Err(CliError::Usage("this stage needs model_path (--model)".into()));
    };
    Ok(load_model(p)?)
}

pub fn eval(cfg: &RunConfig, out: &mut OutputDir) -> StageResult {
    let model = load_trained(cfg)?;
    let (d, counts) = load_labeled(cfg)?;
    let x = dataset_features(cfg, &d)?;
    let report = evaluate_external(&model, &d, &x, cfg.decision_threshold)?;
    let family = model.family();
    out.write_json("eval.json", &report)?;
    out.write(
        "comparison_external.csv",
        &comparison_csv(&[ComparisonRow::from_report(family.display_name(), &report)]),
    )?;
    if cfg.emit_plots_data && !report.roc_points.is_empty() {
        out.write(&format!("roc/external_{family}.tsv"), &roc_tsv(&report.roc_points))?;
    }
    let results = json!({ "family": family, "auc": report.auc, "accuracy": report.accuracy });
    Ok((Some(counts), results))
}

pub fn predict(cfg: &RunConfig, out: &mut OutputDir) -> StageResult {
    let model = load_trained(cfg)?;
    let (peptides, _, counts) = load_peptides(cfg)?;
    let ids: Vec<&str> = peptides.iter().map(Peptide::id).collect();
    let x = load_features(cfg, &ids, &peptides)?;
    let scores = model.score_matrix(&x)?;
    let threshold = cfg.decision_threshold.unwrap_or(model.default_threshold());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "score", "prediction"]).expect("in-memory write");
    for (id, s) in ids.iter().zip(&scores) {
        let class = Class::from_positive(*s >= threshold);
        w.write_record([id, s.to_string().as_str(), class.as_str()])
            .expect("in-memory write");
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv");
    out.write("predictions.csv", &csv)?;
    let positives = scores.iter().filter(|&&s| s >= threshold).count();
    Ok((counts, json!({ "predicted": scores.len(), "predicted_hemolytic": positives, "threshold": threshold })))
}
