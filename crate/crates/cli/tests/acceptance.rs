//! Acceptance gate: each criterion prints one PASS/FAIL line with its
//! measurement and wall time; the process fails if any criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use pepscreen::eval::{auc_pairwise_oracle, roc_auc};
use pepscreen::features::{FeatureKind, FeatureMatrix};
use pepscreen::ingest::{HemolysisRecord, Peptide};
use pepscreen::labeling::{classify_record, HemolysisCriteria, Label};
use pepscreen::learn::boost::{logistic_loss, sigmoid};
use pepscreen::learn::{
    train_decision_tree, train_gradient_boosting, train_svm, BoostParams, DesignMatrix, Kernel, SvmParams,
    TreeNode, TreeParams,
};
use pepscreen::simcluster::{
    build_clusters, cluster_stratified_kfold, verify_split, ClusterConfig, ClusterError, ClusterScope,
};
use pepscreen::synth::{generate_corpus, generate_records, SynthConfig};
use pepscreen::Class;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::Value;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

// ---------------------------------------------------------------- 1

/// The thirteen criterion rows written out literally.
fn table_oracle(pct: f64, conc: f64) -> Label {
    if (pct >= 5.0 && conc <= 10.0)
        || (pct >= 10.0 && conc <= 20.0)
        || (pct >= 15.0 && conc <= 50.0)
        || (pct >= 20.0 && conc <= 100.0)
        || (pct >= 30.0 && conc <= 200.0)
        || (pct >= 50.0 && conc <= 300.0)
    {
        return Label::Hemolytic;
    }
    if (pct <= 2.0 && conc >= 10.0)
        || (pct <= 5.0 && conc >= 20.0)
        || (pct <= 10.0 && conc >= 50.0)
        || (pct <= 15.0 && conc >= 100.0)
        || (pct <= 20.0 && conc >= 200.0)
        || (pct <= 30.0 && conc >= 300.0)
        || (pct <= 50.0 && conc >= 500.0)
    {
        return Label::NonHemolytic;
    }
    Label::Indeterminate
}

fn labeling_oracle() -> Outcome {
    let criteria = HemolysisCriteria::default();
    let pep = Peptide::new("p", "KLLK").unwrap();
    let mut cells = 0;
    let mut disagreements = Vec::new();
    for pct in 0..=100 {
        for c in 1..=120 {
            let conc = (c * 5) as f64;
            let rec = HemolysisRecord::new(pep.clone(), pct as f64, conc).unwrap();
            cells += 1;
            if classify_record(&rec, &criteria) != table_oracle(pct as f64, conc) {
                disagreements.push((pct, conc));
            }
        }
    }
    // the lowest concentration and the half-unit boundaries as well
    for pct in (0..=200).map(|p| p as f64 / 2.0) {
        for conc in [1.0, 9.5, 10.0, 10.5, 19.5, 20.0, 50.0, 99.5, 100.0, 300.0, 499.5, 500.0] {
            let rec = HemolysisRecord::new(pep.clone(), pct, conc).unwrap();
            if classify_record(&rec, &criteria) != table_oracle(pct, conc) {
                disagreements.push((pct as i32, conc));
            }
        }
    }
    ensure!(disagreements.is_empty(), "{} disagreements, first {:?}", disagreements.len(), disagreements[0]);
    Ok(format!("0 disagreements on the {cells}-cell grid plus boundary sweep"))
}

// ---------------------------------------------------------------- 2

fn lcs_oracle(a: &[u8], b: &[u8]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for &x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, &y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        prev = cur;
    }
    prev[b.len()]
}

fn identity_oracle(a: &[u8], b: &[u8]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    lcs_oracle(a, b) as f64 / longest as f64
}

fn separation() -> Outcome {
    let mut master = ChaCha8Rng::seed_from_u64(2024);
    let mut pairs_checked = 0usize;
    let mut folds_checked = 0usize;
    for corpus in 0..50 {
        let synth = SynthConfig {
            n_peptides: master.random_range(60..=500),
            min_len: 5,
            max_len: 40,
            bias: master.random_range(0.0..0.4),
            mutation_rate: master.random_range(0.05..0.3),
            max_family_size: master.random_range(1..=6),
            seed: master.random(),
            ..SynthConfig::default()
        };
        let scope = if corpus % 2 == 0 { ClusterScope::PerClass } else { ClusterScope::Joint };
        let cfg = ClusterConfig { threshold: 0.40, scope };
        let d = generate_corpus(&synth);
        let set = build_clusters(&d, &cfg).map_err(|e| e.to_string())?;
        let assignment = set.assignment();
        let of = &assignment;
        let s = d.samples();
        let same_scope = |i: usize, j: usize| scope == ClusterScope::Joint || s[i].class == s[j].class;
        let bad: Vec<(usize, usize)> = (0..s.len())
            .into_par_iter()
            .flat_map_iter(|i| {
                (i + 1..s.len())
                    .filter(move |&j| of[i] != of[j] && same_scope(i, j))
                    .filter(move |&j| identity_oracle(s[i].peptide.residues(), s[j].peptide.residues()) >= 0.40)
                    .map(move |j| (i, j))
            })
            .collect();
        ensure!(bad.is_empty(), "corpus {corpus}: {} cross-cluster pairs reach 0.40", bad.len());
        pairs_checked += s.len() * (s.len() - 1) / 2;

        let mut k = 5;
        let folds = loop {
            match cluster_stratified_kfold(&set, k, synth.seed) {
                Ok(f) => break f,
                Err(ClusterError::InfeasibleSplit { .. }) if k > 2 => k -= 1,
                Err(e) => return Err(format!("corpus {corpus}: {e}")),
            }
        };
        for f in 0..folds.k {
            let (train, test) = (folds.train_indices(f), folds.test_indices(f));
            let groups: Vec<Option<Class>> = match scope {
                ClusterScope::PerClass => Class::BOTH.iter().map(|&c| Some(c)).collect(),
                ClusterScope::Joint => vec![None],
            };
            for g in groups {
                let pick = |idx: &[usize]| -> Vec<&Peptide> {
                    idx.iter()
                        .filter(|&&i| g.is_none_or(|c| s[i].class == c))
                        .map(|&i| &s[i].peptide)
                        .collect()
                };
                let (a, b) = (pick(&train), pick(&test));
                if a.is_empty() || b.is_empty() {
                    continue;
                }
                let check = verify_split(&a, &b, 0.40).map_err(|e| e.to_string())?;
                ensure!(check.pass, "corpus {corpus} fold {f}: max identity {}", check.max_identity);
                folds_checked += 1;
            }
        }
    }
    Ok(format!("50 corpora, {pairs_checked} pairs brute-forced, {folds_checked} fold checks passed"))
}

// ---------------------------------------------------------------- 3

fn pairwise_oracle(scores: &[f64], labels: &[Class]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == Class::Hemolytic && labels[j] == Class::NonHemolytic {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn auc_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut tied_sets = 0;
    for case in 0..1000 {
        let n = rng.random_range(2..=200);
        let levels = match case % 3 {
            0 => 3,
            1 => 20,
            _ => 0,
        };
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if levels == 0 {
                    rng.random_range(-5.0..5.0)
                } else {
                    rng.random_range(0..levels) as f64 / levels as f64
                }
            })
            .collect();
        let mut labels: Vec<Class> = (0..n).map(|_| Class::from_positive(rng.random_bool(0.4))).collect();
        labels[0] = Class::Hemolytic;
        labels[1] = Class::NonHemolytic;
        if levels > 0 {
            tied_sets += 1;
        }
        let trap = roc_auc(&scores, &labels).map_err(|e| e.to_string())?.auc;
        let oracle = pairwise_oracle(&scores, &labels);
        let lib_oracle = auc_pairwise_oracle(&scores, &labels).map_err(|e| e.to_string())?;
        worst = worst.max((trap - oracle).abs()).max((lib_oracle - oracle).abs());
    }
    ensure!(worst <= 1e-12, "max |trapezoid - pairwise| = {worst:e}");
    Ok(format!("1000 score sets ({tied_sets} with heavy ties), max deviation {worst:e}"))
}

// ---------------------------------------------------------------- 4

fn weighted_gini(y: &[Class]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let n = y.len() as f64;
    let p = y.iter().filter(|c| c.is_positive()).count() as f64 / n;
    n * (1.0 - p * p - (1.0 - p) * (1.0 - p))
}

/// Weighted child impurity of every (feature, midpoint) candidate.
fn exhaustive_best(x: &[Vec<f64>], y: &[Class]) -> Option<f64> {
    let d = x[0].len();
    let mut best: Option<f64> = None;
    for f in 0..d {
        let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (l, r): (Vec<Class>, Vec<Class>) = {
                let mut l = Vec::new();
                let mut r = Vec::new();
                for (row, c) in x.iter().zip(y) {
                    if row[f] < t {
                        l.push(*c)
                    } else {
                        r.push(*c)
                    }
                }
                (l, r)
            };
            let imp = weighted_gini(&l) + weighted_gini(&r);
            best = Some(best.map_or(imp, |b: f64| b.min(imp)));
        }
    }
    best
}

fn split_impurity(x: &[Vec<f64>], y: &[Class], feature: usize, threshold: f64) -> f64 {
    let l: Vec<Class> = x.iter().zip(y).filter(|(r, _)| r[feature] < threshold).map(|(_, c)| *c).collect();
    let r: Vec<Class> = x.iter().zip(y).filter(|(r, _)| r[feature] >= threshold).map(|(_, c)| *c).collect();
    weighted_gini(&l) + weighted_gini(&r)
}

fn tree_split_oracle() -> Outcome {
    let params = TreeParams {
        max_depth: 1,
        ..TreeParams::default()
    };
    let mut cases = 0;
    let mut splits = 0;
    for n in 1..=8usize {
        for d in 1..=3usize {
            for variant in 0..12u64 {
                let mut rng = ChaCha8Rng::seed_from_u64((n as u64) << 16 | (d as u64) << 8 | variant);
                let range = if variant % 2 == 0 { 3 } else { 8 };
                let x: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..d).map(|_| rng.random_range(0..range) as f64 * 0.5).collect())
                    .collect();
                let y: Vec<Class> = (0..n).map(|_| Class::from_positive(rng.random_bool(0.5))).collect();
                let dm = DesignMatrix::from_rows(&x).unwrap();
                let tree = train_decision_tree(&dm, &y, None, &params, 0).map_err(|e| e.to_string())?;
                let parent = weighted_gini(&y);
                let best = exhaustive_best(&x, &y);
                match tree.root.root_split() {
                    Some((f, t)) => {
                        let got = split_impurity(&x, &y, f, t);
                        let want = best.expect("a split implies candidates");
                        ensure!(
                            (got - want).abs() <= 1e-12,
                            "n={n} d={d} v={variant}: chose {got}, exhaustive minimum {want}"
                        );
                        splits += 1;
                    }
                    None => {
                        // a leaf is correct only when no candidate lowers impurity
                        if let Some(b) = best {
                            ensure!(b >= parent - 1e-12, "n={n} d={d} v={variant}: leaf but split reaches {b} < {parent}");
                        }
                    }
                }
                cases += 1;
            }
        }
    }
    ensure!(cases >= 200, "only {cases} cases enumerated");
    Ok(format!("{cases} datasets, {splits} root splits at the exhaustive minimum"))
}

// ---------------------------------------------------------------- 5

/// Minimizer of a convex 1-D function by bisection on its numeric slope.
fn minimize_1d(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (-1e3, 1e3);
    for _ in 0..200 {
        let mid = (lo + hi) / 2.0;
        if f(mid + 1e-4) - f(mid - 1e-4) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo + hi) / 2.0
}

fn leaves(node: &TreeNode) -> Vec<f64> {
    node.leaf_values()
}

fn boosting_correctness() -> Outcome {
    let d = generate_corpus(&SynthConfig {
        n_peptides: 400,
        seed: 5,
        ..SynthConfig::default()
    });
    let m = FeatureMatrix::from_dataset(&d, FeatureKind::UnitNorm);
    let x = DesignMatrix::from(&m);
    let y = d.classes();
    let params = BoostParams {
        n_rounds: 50,
        ..BoostParams::default()
    };
    let model = train_gradient_boosting(&x, &y, &params).map_err(|e| e.to_string())?;
    let n = y.len();
    let target: Vec<f64> = y.iter().map(|c| if c.is_positive() { 1.0 } else { 0.0 }).collect();
    let mut prev_loss = f64::INFINITY;
    let mut worst_leaf: f64 = 0.0;
    let mut n_leaves = 0;
    for round in 0..=model.trees.len() {
        let raw: Vec<f64> = (0..n).map(|i| model.raw_score_truncated(x.row(i), round)).collect();
        let loss = logistic_loss(&raw, &y);
        ensure!(loss <= prev_loss, "round {round}: loss rose {prev_loss} -> {loss}");
        prev_loss = loss;
        if round == model.trees.len() {
            break;
        }
        let tree = &model.trees[round];
        let values = leaves(tree);
        let mut g_sum = vec![0.0; values.len()];
        let mut h_sum = vec![0.0; values.len()];
        for i in 0..n {
            let p = sigmoid(raw[i]);
            let leaf = tree.leaf_index(x.row(i));
            g_sum[leaf] += p - target[i];
            h_sum[leaf] += p * (1.0 - p);
        }
        for (leaf, &w) in values.iter().enumerate() {
            let (g, h) = (g_sum[leaf], h_sum[leaf] + params.lambda);
            let best = minimize_1d(|v| g * v + 0.5 * h * v * v);
            worst_leaf = worst_leaf.max((best - w).abs());
            n_leaves += 1;
        }
    }
    ensure!(worst_leaf <= 1e-9, "leaf weight off by {worst_leaf:e}");
    Ok(format!(
        "loss non-increasing over 50 rounds (final {prev_loss:.4}); {n_leaves} leaves within {worst_leaf:.1e}"
    ))
}

// ---------------------------------------------------------------- 6

fn kernel(k: &Kernel, a: &[f64], b: &[f64]) -> f64 {
    match k {
        Kernel::Linear => a.iter().zip(b).map(|(p, q)| p * q).sum(),
        Kernel::Rbf { gamma } => (-gamma * a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>()).exp(),
    }
}

fn svm_kkt() -> Outcome {
    const TOL: f64 = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut checked = 0;
    for problem in 0..20 {
        let n = rng.random_range(4..=60);
        let dim = rng.random_range(1..=5);
        let shift = rng.random_range(0.0..2.0);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = Class::from_positive(i % 2 == 0);
            let s = if c.is_positive() { shift } else { -shift };
            rows.push((0..dim).map(|_| rng.random_range(-1.0..1.0) + s * 0.5).collect::<Vec<f64>>());
            y.push(c);
        }
        let params = SvmParams {
            c: [0.1, 1.0, 10.0][problem % 3],
            kernel: if problem % 2 == 0 {
                Kernel::Linear
            } else {
                Kernel::Rbf {
                    gamma: rng.random_range(0.1..2.0),
                }
            },
            tolerance: TOL,
            max_passes: 1000,
        };
        let x = DesignMatrix::from_rows(&rows).unwrap();
        let model = train_svm(&x, &y, &params).map_err(|e| e.to_string())?;
        ensure!(model.converged, "problem {problem}: not converged after {} iterations", model.iterations);
        ensure!(!model.coefficients.is_empty(), "problem {problem}: no support vectors");
        let mut balance = 0.0;
        for i in 0..n {
            let alpha = model.alpha_of(i);
            let yi = if y[i].is_positive() { 1.0 } else { -1.0 };
            balance += alpha * yi;
            ensure!((0.0..=params.c).contains(&alpha), "problem {problem}: alpha {alpha} outside [0, C]");
            let f: f64 = model
                .support_vectors
                .iter()
                .zip(&model.coefficients)
                .map(|(sv, c)| c * kernel(&params.kernel, sv, &rows[i]))
                .sum::<f64>()
                + model.bias;
            let margin = yi * f;
            let ok = if alpha == 0.0 {
                margin >= 1.0 - TOL
            } else if alpha == params.c {
                margin <= 1.0 + TOL
            } else {
                (margin - 1.0).abs() <= TOL
            };
            ensure!(ok, "problem {problem} sample {i}: alpha {alpha}, y f = {margin}");
            checked += 1;
        }
        ensure!(balance.abs() < 1e-9, "problem {problem}: sum alpha y = {balance}");
    }
    let x = DesignMatrix::new(1, vec![1.0, -1.0]).unwrap();
    let params = SvmParams {
        c: 1e6,
        kernel: Kernel::Linear,
        tolerance: 1e-9,
        max_passes: 1000,
    };
    let m = train_svm(&x, &[Class::Hemolytic, Class::NonHemolytic], &params).map_err(|e| e.to_string())?;
    let slope = m.decision_value(&[1.0]) - m.decision_value(&[0.0]);
    let boundary = -m.bias / slope;
    ensure!(boundary.abs() <= 1e-6, "symmetric boundary at {boundary}");
    ensure!((slope - 1.0).abs() <= 1e-6, "symmetric slope {slope}");
    Ok(format!("20 problems, {checked} samples within KKT tolerance; symmetric boundary {boundary:.1e}"))
}

// ---------------------------------------------------------------- shared CLI helpers

fn write_activity(dir: &Path, n: usize, seed: u64) -> std::path::PathBuf {
    let records = generate_records(&SynthConfig {
        n_peptides: n,
        seed,
        ..SynthConfig::default()
    });
    let path = dir.join("activity.csv");
    fs::write(&path, pepscreen::ingest::write_activity_csv(&records)).unwrap();
    path
}

fn cli(args: &[&str]) -> Result<(), String> {
    let mut full = vec!["pepscreen"];
    full.extend_from_slice(args);
    match pepscreen_cli::run(full) {
        0 => Ok(()),
        code => Err(format!("pepscreen {} exited with {code}", args.join(" "))),
    }
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn mean_auc(summary: &Value, split: &str, family: &str) -> Option<f64> {
    summary["experiments"]
        .as_array()?
        .iter()
        .find(|e| e["split"] == split)?["models"]
        .as_array()?
        .iter()
        .find(|m| m["family"] == family)?["stats"]["auc"]["mean"]
        .as_f64()
}

// ---------------------------------------------------------------- 7

fn learnability() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = write_activity(tmp.path(), 400, 42);
    let out = tmp.path().join("out");
    cli(&[
        "cv",
        "--activity-csv",
        csv.to_str().unwrap(),
        "--split-mode",
        "both",
        "--out",
        out.to_str().unwrap(),
    ])?;
    let summary = read_json(&out.join("cv_summary.json"));
    let forest = mean_auc(&summary, "random", "forest").ok_or("missing forest AUC")?;
    let boosted = mean_auc(&summary, "random", "boosted").ok_or("missing boosted AUC")?;
    for name in ["comparison_random.csv", "comparison_cluster.csv"] {
        ensure!(out.join(name).exists(), "{name} not written");
    }
    println!("    split comparison (mean AUC, random vs cluster):");
    for family in ["forest", "boosted", "svm"] {
        let r = mean_auc(&summary, "random", family);
        let c = mean_auc(&summary, "cluster", family);
        let direction = match (r, c) {
            (Some(r), Some(c)) if r > c => "random > cluster",
            (Some(r), Some(c)) if r < c => "random < cluster",
            (Some(_), Some(_)) => "equal",
            _ => "undefined",
        };
        println!("      {family:<8} random {r:?} cluster {c:?} ({direction})");
    }
    ensure!(forest >= 0.95 && boosted >= 0.95, "random-split AUC forest {forest}, boosted {boosted}");
    Ok(format!("random-split mean AUC forest {forest:.4}, boosted {boosted:.4}"))
}

// ---------------------------------------------------------------- 8

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = write_activity(tmp.path(), 300, 8);
    let run = |name: &str, threads: Option<&str>| -> Result<Vec<u8>, String> {
        let out = tmp.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_pepscreen"));
        cmd.args(["cv", "--split-mode", "both", "--activity-csv"])
            .arg(&csv)
            .arg("--out")
            .arg(&out);
        match threads {
            Some(t) => cmd.env("PEPSCREEN_THREADS", t),
            None => cmd.env_remove("PEPSCREEN_THREADS"),
        };
        let status = cmd.output().map_err(|e| e.to_string())?;
        ensure!(status.status.success(), "{name}: {}", String::from_utf8_lossy(&status.stderr));
        fs::read(out.join("cv_summary.json")).map_err(|e| e.to_string())
    };
    let a = run("a", Some("4"))?;
    let b = run("b", Some("4"))?;
    let single = run("single", Some("1"))?;
    let default = run("default", None)?;
    ensure!(a == b, "repeated runs differ");
    ensure!(a == single, "1 thread differs from 4 threads");
    ensure!(a == default, "default pool differs from 4 threads");
    Ok(format!("4 runs (4, 4, 1, default threads) byte-identical, {} bytes", a.len()))
}

// ---------------------------------------------------------------- 9

const TABLE_COLUMNS: [&str; 5] = ["Models", "Specificity", "Sensitivity", "Accuracy", "Area Under Curve"];

fn sample_stats(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn report_fidelity() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    // export-style file: extra columns, shuffled order, CRLF line ends
    let records = generate_records(&SynthConfig {
        n_peptides: 150,
        seed: 99,
        ..SynthConfig::default()
    });
    let mut text = String::from("target,concentration_um,sequence,unit,id,hemolysis_percent,reference\r\n");
    for (i, r) in records.iter().enumerate() {
        text.push_str(&format!(
            "Human erythrocytes,{},{},µM,{},{},ref{}\r\n",
            r.concentration_um,
            r.peptide.sequence(),
            r.peptide.id(),
            r.hemolysis_percent,
            i % 7
        ));
    }
    let csv = tmp.path().join("export.csv");
    fs::write(&csv, text).unwrap();
    let out = tmp.path().join("out");
    cli(&["cv", "--activity-csv", csv.to_str().unwrap(), "-k", "5", "--out", out.to_str().unwrap()])?;

    let table = fs::read_to_string(out.join("comparison_random.csv")).map_err(|e| e.to_string())?;
    let mut reader = csv::Reader::from_reader(table.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    ensure!(header[..5] == TABLE_COLUMNS, "header {:?}", header);
    let variance_cols: Vec<String> = TABLE_COLUMNS[1..].iter().map(|c| format!("{c} Variance")).collect();
    ensure!(header[5..] == variance_cols[..], "variance columns {:?}", &header[5..]);

    let summary = read_json(&out.join("cv_summary.json"));
    let models = summary["experiments"][0]["models"].as_array().ok_or("no models")?;
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    ensure!(rows.len() == models.len(), "{} rows for {} models", rows.len(), models.len());
    let metrics = ["specificity", "sensitivity", "accuracy", "auc"];
    for (row, model) in rows.iter().zip(models) {
        let folds = model["folds"].as_array().unwrap();
        ensure!(folds.len() == 5, "{} folds", folds.len());
        for (m, metric) in metrics.iter().enumerate() {
            let values: Vec<f64> = folds.iter().map(|f| f["report"][metric].as_f64().unwrap()).collect();
            let (mean, var) = sample_stats(&values);
            let cell_mean: f64 = row[1 + m].parse().map_err(|_| format!("bad cell {}", &row[1 + m]))?;
            let cell_var: f64 = row[5 + m].parse().map_err(|_| format!("bad cell {}", &row[5 + m]))?;
            ensure!(
                (cell_mean - mean).abs() <= 1e-12 && (cell_var - var).abs() <= 1e-12,
                "{} {metric}: table ({cell_mean}, {cell_var}) vs folds ({mean}, {var})",
                &row[0]
            );
        }
    }
    let names: Vec<&str> = rows.iter().map(|r| r.get(0).unwrap()).collect();
    Ok(format!("columns match; {} rows ({}) agree with per-fold mean and sample variance", rows.len(), names.join(", ")))
}

// ----------------------------------------------------------------

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "labeling oracle", budget: Duration::from_secs(1), run: labeling_oracle },
        Criterion { id: 2, name: "separation guarantee", budget: Duration::from_secs(120), run: separation },
        Criterion { id: 3, name: "AUC oracle equivalence", budget: Duration::from_secs(30), run: auc_equivalence },
        Criterion { id: 4, name: "tree split oracle", budget: Duration::from_secs(30), run: tree_split_oracle },
        Criterion { id: 5, name: "boosting correctness", budget: Duration::from_secs(60), run: boosting_correctness },
        Criterion { id: 6, name: "SVM KKT", budget: Duration::from_secs(60), run: svm_kkt },
        Criterion { id: 7, name: "end-to-end learnability", budget: Duration::from_secs(300), run: learnability },
        Criterion { id: 8, name: "determinism", budget: Duration::from_secs(300), run: determinism },
        Criterion { id: 9, name: "report fidelity", budget: Duration::from_secs(60), run: report_fidelity },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str()) || c.id.to_string() == *f) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > c.budget => Err(format!("took {elapsed:.2?}, budget {:?}", c.budget)),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        if outcome.is_err() {
            failed += 1;
        }
        println!("[{tag}] criterion {}: {} ({elapsed:.2?}) {detail}", c.id, c.name);
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
