//! Sequence identity, single-linkage identity clustering, and fold assignment.
//!
//! Identity between two sequences is `LCS(a, b) / max(|a|, |b|)`. Clusters are
//! the connected components of the graph joining pairs with identity at or
//! above the threshold, so any two sequences in different clusters of the same
//! scope are strictly below it.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Peptide;
use crate::labeling::{Class, LabeledDataset};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("threshold {0} outside (0, 1]")]
    BadThreshold(f64),
    #[error("fold count must be at least 2, got {0}")]
    BadFoldCount(usize),
    #[error("cannot split {class} into {k} folds: only {available} {unit}")]
    InfeasibleSplit {
        class: Class,
        k: usize,
        available: usize,
        unit: &'static str,
    },
    #[error("{0} side of the split is empty")]
    EmptySide(&'static str),
    #[error("{0}")]
    Csv(String),
}

/// Length of the longest common subsequence.
pub fn lcs_length(a: &[u8], b: &[u8]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return 0;
    }
    if short.len() <= 64 {
        lcs_bitparallel(short, long)
    } else {
        lcs_dp(short, long)
    }
}

/// Bit-vector LCS (Allison-Dix / Hyyrö) for `a.len() <= 64`.
fn lcs_bitparallel(a: &[u8], b: &[u8]) -> usize {
    debug_assert!(a.len() <= 64);
    let mut peq = [0u64; 256];
    for (i, &c) in a.iter().enumerate() {
        peq[c as usize] |= 1 << i;
    }
    let mask = if a.len() == 64 { !0 } else { (1u64 << a.len()) - 1 };
    let mut v = !0u64;
    for &c in b {
        let u = v & peq[c as usize];
        v = v.wrapping_add(u) | (v - u);
    }
    // LCS length = number of zero bits left in the low |a| bits
    (!v & mask).count_ones() as usize
}

/// Quadratic-time, linear-space dynamic programming LCS.
pub fn lcs_dp(a: &[u8], b: &[u8]) -> usize {
    let mut prev = vec![0u32; b.len() + 1];
    let mut cur = vec![0u32; b.len() + 1];
    for &ca in a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()] as usize
}

pub fn sequence_identity(a: &[u8], b: &[u8]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    lcs_length(a, b) as f64 / longest as f64
}

pub fn pairwise_identity(a: &Peptide, b: &Peptide) -> f64 {
    sequence_identity(a.residues(), b.residues())
}

/// Exact upper bound on identity from lengths alone.
pub fn identity_upper_bound(len_a: usize, len_b: usize) -> f64 {
    len_a.min(len_b) as f64 / len_a.max(len_b) as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterScope {
    /// Cluster each class separately.
    #[default]
    PerClass,
    /// Cluster all samples together.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub threshold: f64,
    pub scope: ClusterScope,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            threshold: 0.40,
            scope: ClusterScope::PerClass,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(ClusterError::BadThreshold(self.threshold));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    /// Class used for stratification: the members' class under per-class
    /// scope, the majority class under joint scope (ties go to non-hemolytic).
    pub class: Class,
    /// Sample indices, ascending.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    pub scope: ClusterScope,
    pub threshold: f64,
    n_samples: usize,
}

impl ClusterSet {
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Cluster id of every sample.
    pub fn assignment(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.n_samples];
        for (cid, c) in self.clusters.iter().enumerate() {
            for &m in &c.members {
                out[m] = cid;
            }
        }
        out
    }

    pub fn count_by_class(&self, class: Class) -> usize {
        self.clusters.iter().filter(|c| c.class == class).count()
    }

    /// Minimum within-cluster pairwise identity per cluster (`None` for
    /// singletons). Diagnostic only: single linkage does not bound it.
    pub fn min_within_identity(&self, dataset: &LabeledDataset) -> Vec<Option<f64>> {
        let samples = dataset.samples();
        self.clusters
            .par_iter()
            .map(|c| {
                let mut min: Option<f64> = None;
                for (x, &i) in c.members.iter().enumerate() {
                    for &j in &c.members[x + 1..] {
                        let id = pairwise_identity(&samples[i].peptide, &samples[j].peptide);
                        min = Some(min.map_or(id, |m| m.min(id)));
                    }
                }
                min
            })
            .collect()
    }

    /// CSV with columns `id,class,cluster_id`; `class` is the sample's own class.
    pub fn to_csv(&self, dataset: &LabeledDataset) -> String {
        let assign = self.assignment();
        let mut s = String::from("id,class,cluster_id\n");
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        for (i, sample) in dataset.samples().iter().enumerate() {
            w.write_record([
                sample.peptide.id(),
                sample.class.as_str(),
                &assign[i].to_string(),
            ])
            .expect("in-memory write");
        }
        s.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf-8"));
        s
    }

    /// Reads `id,class,cluster_id` rows aligned with `dataset`.
    pub fn from_csv(
        text: &str,
        dataset: &LabeledDataset,
        config: &ClusterConfig,
    ) -> Result<ClusterSet, ClusterError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut n = 0;
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| ClusterError::Csv(e.to_string()))?;
            let sample = dataset
                .samples()
                .get(i)
                .ok_or_else(|| ClusterError::Csv("more cluster rows than samples".into()))?;
            if rec.get(0) != Some(sample.peptide.id()) {
                return Err(ClusterError::Csv(format!(
                    "row {} id does not match sample '{}'",
                    i + 2,
                    sample.peptide.id()
                )));
            }
            let cid: usize = rec
                .get(2)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| ClusterError::Csv(format!("row {}: bad cluster_id", i + 2)))?;
            groups.entry(cid).or_default().push(i);
            n += 1;
        }
        if n != dataset.len() {
            return Err(ClusterError::Csv(format!(
                "{n} cluster rows for {} samples",
                dataset.len()
            )));
        }
        let clusters = groups
            .into_values()
            .map(|members| make_cluster(dataset, members))
            .collect();
        Ok(ClusterSet {
            clusters,
            scope: config.scope,
            threshold: config.threshold,
            n_samples: n,
        })
    }
}

fn make_cluster(dataset: &LabeledDataset, members: Vec<usize>) -> Cluster {
    let pos = members
        .iter()
        .filter(|&&i| dataset.samples()[i].class.is_positive())
        .count();
    Cluster {
        class: Class::from_positive(pos * 2 > members.len()),
        members,
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so roots are stable under any edge order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn scope_groups(dataset: &LabeledDataset, scope: ClusterScope) -> Vec<Vec<usize>> {
    match scope {
        ClusterScope::Joint => vec![(0..dataset.len()).collect()],
        ClusterScope::PerClass => Class::BOTH
            .iter()
            .map(|&c| {
                dataset
                    .samples()
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.class == c)
                    .map(|(i, _)| i)
                    .collect::<Vec<_>>()
            })
            .filter(|g| !g.is_empty())
            .collect(),
    }
}

/// Single-linkage clusters at `config.threshold` (inclusive edges).
pub fn build_clusters(dataset: &LabeledDataset, config: &ClusterConfig) -> Result<ClusterSet, ClusterError> {
    build_clusters_impl(dataset, config, true)
}

/// Same as [`build_clusters`] but without the length-ratio prefilter; every
/// pair is aligned. Reference path for checking the prefilter.
pub fn build_clusters_exhaustive(
    dataset: &LabeledDataset,
    config: &ClusterConfig,
) -> Result<ClusterSet, ClusterError> {
    build_clusters_impl(dataset, config, false)
}

fn build_clusters_impl(
    dataset: &LabeledDataset,
    config: &ClusterConfig,
    prefilter: bool,
) -> Result<ClusterSet, ClusterError> {
    config.validate()?;
    let samples = dataset.samples();
    let n = samples.len();
    let mut uf = UnionFind::new(n);
    for group in scope_groups(dataset, config.scope) {
        // edges per row in ascending (i, j) order; reduced sequentially
        let edges: Vec<Vec<usize>> = (0..group.len())
            .into_par_iter()
            .map(|x| {
                let a = samples[group[x]].peptide.residues();
                group[x + 1..]
                    .iter()
                    .copied()
                    .filter(|&j| {
                        let b = samples[j].peptide.residues();
                        if prefilter && identity_upper_bound(a.len(), b.len()) < config.threshold {
                            return false;
                        }
                        sequence_identity(a, b) >= config.threshold
                    })
                    .collect()
            })
            .collect();
        for (x, row) in edges.into_iter().enumerate() {
            for j in row {
                uf.union(group[x], j);
            }
        }
    }
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        by_root.entry(uf.find(i)).or_default().push(i);
    }
    // roots are component minima, so clusters come out ordered by first member
    let clusters = by_root
        .into_values()
        .map(|members| make_cluster(dataset, members))
        .collect();
    Ok(ClusterSet {
        clusters,
        scope: config.scope,
        threshold: config.threshold,
        n_samples: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldGranularity {
    ClusterLevel,
    SampleLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
    pub granularity: FoldGranularity,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }

    /// CSV with columns `id,fold`.
    pub fn to_csv(&self, dataset: &LabeledDataset) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "fold"]).expect("in-memory write");
        for (s, f) in dataset.samples().iter().zip(&self.fold_of) {
            w.write_record([s.peptide.id(), &f.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Reads `id,fold` rows aligned with `dataset`. `k` is one past the
    /// largest fold index.
    pub fn from_csv(
        text: &str,
        dataset: &LabeledDataset,
        granularity: FoldGranularity,
        seed: u64,
    ) -> Result<FoldAssignment, ClusterError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut fold_of = Vec::with_capacity(dataset.len());
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| ClusterError::Csv(e.to_string()))?;
            let sample = dataset
                .samples()
                .get(i)
                .ok_or_else(|| ClusterError::Csv("more fold rows than samples".into()))?;
            if rec.get(0) != Some(sample.peptide.id()) {
                return Err(ClusterError::Csv(format!(
                    "row {} id does not match sample '{}'",
                    i + 2,
                    sample.peptide.id()
                )));
            }
            let f: usize = rec
                .get(1)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| ClusterError::Csv(format!("row {}: bad fold", i + 2)))?;
            fold_of.push(f);
        }
        if fold_of.len() != dataset.len() {
            return Err(ClusterError::Csv(format!(
                "{} fold rows for {} samples",
                fold_of.len(),
                dataset.len()
            )));
        }
        let k = fold_of.iter().max().map_or(0, |m| m + 1);
        if k < 2 {
            return Err(ClusterError::BadFoldCount(k));
        }
        Ok(FoldAssignment {
            k,
            fold_of,
            granularity,
            seed,
        })
    }
}

/// Stratified k-fold at cluster granularity.
///
/// Per class, clusters are shuffled by `seed`, stably ordered by size
/// (largest first), and each is placed on the fold currently holding the fewest
/// samples of that class (lowest index on ties).
pub fn cluster_stratified_kfold(
    clusters: &ClusterSet,
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, ClusterError> {
    if k < 2 {
        return Err(ClusterError::BadFoldCount(k));
    }
    let mut fold_of = vec![usize::MAX; clusters.n_samples];
    for (stream, class) in Class::BOTH.into_iter().enumerate() {
        let mut group: Vec<&Cluster> = clusters.clusters.iter().filter(|c| c.class == class).collect();
        if group.len() < k {
            return Err(ClusterError::InfeasibleSplit {
                class,
                k,
                available: group.len(),
                unit: "clusters",
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        group.shuffle(&mut rng);
        group.sort_by_key(|g| std::cmp::Reverse(g.members.len()));
        let mut load = vec![0usize; k];
        for c in group {
            let (fold, _) = load
                .iter()
                .enumerate()
                .min_by_key(|&(f, &l)| (l, f))
                .expect("k >= 2");
            load[fold] += c.members.len();
            for &m in &c.members {
                fold_of[m] = fold;
            }
        }
    }
    Ok(FoldAssignment {
        k,
        fold_of,
        granularity: FoldGranularity::ClusterLevel,
        seed,
    })
}

/// Stratified k-fold at sample granularity: per class, shuffle and deal
/// round-robin starting at fold 0.
pub fn sample_stratified_kfold(
    dataset: &LabeledDataset,
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, ClusterError> {
    if k < 2 {
        return Err(ClusterError::BadFoldCount(k));
    }
    let mut fold_of = vec![usize::MAX; dataset.len()];
    for (stream, class) in Class::BOTH.into_iter().enumerate() {
        let mut idx: Vec<usize> = dataset
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.class == class)
            .map(|(i, _)| i)
            .collect();
        if idx.len() < k {
            return Err(ClusterError::InfeasibleSplit {
                class,
                k,
                available: idx.len(),
                unit: "samples",
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold_of[i] = pos % k;
        }
    }
    Ok(FoldAssignment {
        k,
        fold_of,
        granularity: FoldGranularity::SampleLevel,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCheck {
    pub max_identity: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Ids of the (train, test) pair attaining `max_identity`.
    pub argmax_pair: (String, String),
}

/// Maximum train×test identity and whether it stays below `threshold`.
pub fn verify_split(train: &[&Peptide], test: &[&Peptide], threshold: f64) -> Result<SplitCheck, ClusterError> {
    if train.is_empty() {
        return Err(ClusterError::EmptySide("train"));
    }
    if test.is_empty() {
        return Err(ClusterError::EmptySide("test"));
    }
    // per train row: (best identity, test index); first index wins ties
    let per_row: Vec<(f64, usize)> = train
        .par_iter()
        .map(|a| {
            let mut best = (-1.0, 0);
            for (j, b) in test.iter().enumerate() {
                if identity_upper_bound(a.len(), b.len()) <= best.0 {
                    continue;
                }
                let id = pairwise_identity(a, b);
                if id > best.0 {
                    best = (id, j);
                }
            }
            best
        })
        .collect();
    let (mut best, mut arg) = (-1.0, (0, 0));
    for (i, &(v, j)) in per_row.iter().enumerate() {
        if v > best {
            best = v;
            arg = (i, j);
        }
    }
    Ok(SplitCheck {
        max_identity: best,
        threshold,
        pass: best < threshold,
        argmax_pair: (train[arg.0].id().to_string(), test[arg.1].id().to_string()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldCheck {
    pub fold: usize,
    /// One check per class under per-class scope (same-class comparisons
    /// only), a single check under joint scope.
    pub checks: Vec<(Option<Class>, SplitCheck)>,
    pub pass: bool,
}

/// Runs [`verify_split`] for every fold's train/test partition.
pub fn verify_folds(
    dataset: &LabeledDataset,
    folds: &FoldAssignment,
    threshold: f64,
    scope: ClusterScope,
) -> Result<Vec<FoldCheck>, ClusterError> {
    let samples = dataset.samples();
    (0..folds.k)
        .map(|f| {
            let classes: Vec<Option<Class>> = match scope {
                ClusterScope::PerClass => Class::BOTH.iter().map(|&c| Some(c)).collect(),
                ClusterScope::Joint => vec![None],
            };
            let mut checks = Vec::new();
            for class in classes {
                let keep = |i: &&usize| class.is_none_or(|c| samples[**i].class == c);
                let train: Vec<&Peptide> = folds
                    .train_indices(f)
                    .iter()
                    .filter(&keep)
                    .map(|&i| &samples[i].peptide)
                    .collect();
                let test: Vec<&Peptide> = folds
                    .test_indices(f)
                    .iter()
                    .filter(&keep)
                    .map(|&i| &samples[i].peptide)
                    .collect();
                if train.is_empty() || test.is_empty() {
                    continue;
                }
                checks.push((class, verify_split(&train, &test, threshold)?));
            }
            let pass = checks.iter().all(|(_, c)| c.pass);
            Ok(FoldCheck {
                fold: f,
                checks,
                pass,
            })
        })
        .collect()
}
