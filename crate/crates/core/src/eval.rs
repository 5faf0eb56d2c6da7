//! Cosine matching, threshold learning and k-fold evaluation.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{sample_negatives_for, FoldAssignment, LabeledPairSet};
use crate::error::{Error, Result};
use crate::gabor::FeatureSet;
use crate::par;
use crate::preprocess::Method;
use crate::tensor::Tensor;
use crate::txqda::{train_txqda, ProjectionBasis, TrainTensors, TxqdaConfig};

/// `uᵀv / (‖u‖‖v‖)`; zero-norm inputs are an error rather than a silent 0.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch {
            what: "cosine operands".into(),
            expected: u.len().to_string(),
            found: v.len().to_string(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if !(nu > 0.0 && nv > 0.0) {
        return Err(Error::Numeric("cosine similarity of a zero-norm vector".into()));
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPair {
    pub score: f64,
    pub kin: bool,
    pub fold: usize,
}

/// Fraction of pairs classified correctly when "kin" means `score > threshold`.
pub fn accuracy_at(scores: &[(f64, bool)], threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let correct = scores
        .iter()
        .filter(|&&(s, kin)| (s > threshold) == kin)
        .count();
    correct as f64 / scores.len() as f64
}

/// Threshold maximizing accuracy over `{min − 1} ∪ midpoints ∪ {max + 1}` of
/// the sorted scores; ties go to the larger threshold.
pub fn select_threshold(scores: &[(f64, bool)]) -> Result<f64> {
    let n_kin = scores.iter().filter(|s| s.1).count();
    if n_kin == 0 || n_kin == scores.len() {
        return Err(Error::InvalidArgument(
            "threshold selection needs both kin and non-kin scores".into(),
        ));
    }
    if scores.iter().any(|s| !s.0.is_finite()) {
        return Err(Error::Numeric("non-finite score".into()));
    }
    let mut kin: Vec<f64> = scores.iter().filter(|s| s.1).map(|s| s.0).collect();
    let mut non: Vec<f64> = scores.iter().filter(|s| !s.1).map(|s| s.0).collect();
    kin.sort_by(f64::total_cmp);
    non.sort_by(f64::total_cmp);
    let mut all: Vec<f64> = scores.iter().map(|s| s.0).collect();
    all.sort_by(f64::total_cmp);

    let mut candidates = Vec::with_capacity(all.len() + 1);
    candidates.push(all[0] - 1.0);
    candidates.extend(all.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.push(all[all.len() - 1] + 1.0);

    let mut best = (usize::MIN, f64::NEG_INFINITY);
    for t in candidates {
        // kin above t are right, non-kin at or below t are right
        let correct = (kin.len() - kin.partition_point(|&s| s <= t)) + non.partition_point(|&s| s <= t);
        if correct > best.0 || (correct == best.0 && t > best.1) {
            best = (correct, t);
        }
    }
    Ok(best.1)
}

/// Feature tensors of one preprocessing method, ready for training.
#[derive(Debug, Clone)]
pub struct Samples {
    pub parents: Vec<Tensor>,
    pub children: Vec<Tensor>,
    pub families: Vec<u64>,
}

impl Samples {
    pub fn from_feature_set(set: &FeatureSet) -> Self {
        Self {
            parents: set.parents.iter().map(|t| t.to_tensor()).collect(),
            children: set.children.iter().map(|t| t.to_tensor()).collect(),
            families: set.family_ids.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.families.len()
    }

    pub fn is_empty(&self) -> bool {
        self.families.is_empty()
    }

    fn subset(&self, rows: &[usize]) -> TrainTensors {
        let labels: Vec<u64> = rows.iter().map(|&i| self.families[i]).collect();
        TrainTensors {
            parents: rows.iter().map(|&i| self.parents[i].clone()).collect(),
            children: rows.iter().map(|&i| self.children[i].clone()).collect(),
            parent_labels: labels.clone(),
            child_labels: labels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    pub seed: u64,
    pub negatives_per_positive: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 5,
            seed: 1,
            negatives_per_positive: 1,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k must be >= 2, got {}", self.k)));
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::Config("negatives_per_positive must be >= 1".into()));
        }
        Ok(())
    }
}

/// Independent per-(seed, fold, purpose) seeds.
fn fold_seed(seed: u64, fold: usize, purpose: u64) -> u64 {
    let mut z = seed
        .wrapping_add((fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(purpose.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_disjoint(samples: &Samples, train: &[usize], test: &[usize]) -> Result<()> {
    let fams = |rows: &[usize]| -> BTreeSet<u64> { rows.iter().map(|&i| samples.families[i]).collect() };
    let shared: Vec<u64> = fams(train).intersection(&fams(test)).copied().collect();
    if !shared.is_empty() {
        return Err(Error::Data(format!(
            "families {shared:?} appear in both train and test folds"
        )));
    }
    Ok(())
}

fn pairs_for(samples: &Samples, rows: &[usize], per_positive: usize, seed: u64) -> Result<LabeledPairSet> {
    let fams: Vec<u64> = rows.iter().map(|&i| samples.families[i]).collect();
    sample_negatives_for(&fams, per_positive, seed)
}

/// Trains the fold's basis on `train` rows, keeping `max_d` features.
pub fn train_fold(
    samples: &Samples,
    train: &[usize],
    fold: usize,
    txqda: &TxqdaConfig,
    max_d: usize,
    eval: &EvalConfig,
) -> Result<ProjectionBasis> {
    let pairs = pairs_for(samples, train, eval.negatives_per_positive, fold_seed(eval.seed, fold, 0))?;
    let cfg = TxqdaConfig {
        d: max_d,
        ..txqda.clone()
    };
    train_txqda(&samples.subset(train), &pairs, &cfg)
}

/// Accuracy of one `d` on a fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldRow {
    pub method: Method,
    pub d: usize,
    pub fold: usize,
    pub accuracy: f64,
    pub threshold: f64,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub row: FoldRow,
    pub test_scores: Vec<ScoredPair>,
}

fn pair_scores(
    train_vecs: &[(Vec<f64>, Vec<f64>)],
    pairs: &LabeledPairSet,
    d: usize,
) -> Result<Vec<(f64, bool)>> {
    pairs
        .labeled()
        .map(|(p, c, kin)| Ok((cosine_similarity(&train_vecs[p].0[..d], &train_vecs[c].1[..d])?, kin)))
        .collect()
}

/// Scores a trained fold for every `d`: the threshold is learned on the
/// training pairs and applied to the held-out pairs.
pub fn score_fold(
    samples: &Samples,
    basis: &ProjectionBasis,
    split: (&[usize], &[usize]),
    fold: usize,
    method: Method,
    d_values: &[usize],
    eval: &EvalConfig,
) -> Result<Vec<FoldOutcome>> {
    check_disjoint(samples, split.0, split.1)?;
    score_split(samples, basis, split, fold, method, d_values, eval)
}

fn score_split(
    samples: &Samples,
    basis: &ProjectionBasis,
    split: (&[usize], &[usize]),
    fold: usize,
    method: Method,
    d_values: &[usize],
    eval: &EvalConfig,
) -> Result<Vec<FoldOutcome>> {
    let (train, test) = split;
    if let Some(&d) = d_values.iter().find(|&&d| d == 0 || d > basis.d()) {
        return Err(Error::Config(format!(
            "d = {d} outside the trained basis (1..={})",
            basis.d()
        )));
    }
    let project = |rows: &[usize]| {
        par::try_map(rows, |&i| {
            Ok::<_, Error>((
                basis.project(&samples.parents[i])?,
                basis.project(&samples.children[i])?,
            ))
        })
    };
    let train_vecs = project(train)?;
    let test_vecs = project(test)?;
    let train_pairs = pairs_for(samples, train, eval.negatives_per_positive, fold_seed(eval.seed, fold, 0))?;
    let test_pairs = pairs_for(samples, test, eval.negatives_per_positive, fold_seed(eval.seed, fold, 1))?;

    d_values
        .iter()
        .map(|&d| {
            let threshold = select_threshold(&pair_scores(&train_vecs, &train_pairs, d)?)?;
            let test_scores = pair_scores(&test_vecs, &test_pairs, d)?;
            Ok(FoldOutcome {
                row: FoldRow {
                    method,
                    d,
                    fold,
                    accuracy: accuracy_at(&test_scores, threshold),
                    threshold,
                    n_test: test_scores.len(),
                },
                test_scores: test_scores
                    .into_iter()
                    .map(|(score, kin)| ScoredPair { score, kin, fold })
                    .collect(),
            })
        })
        .collect()
}

/// Trains on `train` and scores `test` for every `d`.
pub fn evaluate_fold(
    samples: &Samples,
    split: (&[usize], &[usize]),
    fold: usize,
    method: Method,
    txqda: &TxqdaConfig,
    d_values: &[usize],
    eval: &EvalConfig,
) -> Result<Vec<FoldOutcome>> {
    check_disjoint(samples, split.0, split.1)?;
    let max_d = d_values.iter().copied().max().unwrap_or(txqda.d);
    let basis = train_fold(samples, split.0, fold, txqda, max_d, eval)?;
    score_split(samples, &basis, split, fold, method, d_values, eval)
}

/// One `evaluate_fold` per held-out fold; rows ordered by d, then fold.
pub fn cross_validate(
    samples: &Samples,
    folds: &FoldAssignment,
    method: Method,
    txqda: &TxqdaConfig,
    d_values: &[usize],
    eval: &EvalConfig,
) -> Result<Vec<FoldOutcome>> {
    let per_fold = par::try_map_range(folds.k, |fold| {
        let (train, test) = split_rows(samples, folds, fold)?;
        evaluate_fold(samples, (&train, &test), fold, method, txqda, d_values, eval)
    })?;
    Ok(order_outcomes(per_fold))
}

pub(crate) fn order_outcomes(per_fold: Vec<Vec<FoldOutcome>>) -> Vec<FoldOutcome> {
    let mut all: Vec<FoldOutcome> = per_fold.into_iter().flatten().collect();
    all.sort_by_key(|o| (o.row.d, o.row.fold));
    all
}

pub fn split_rows(samples: &Samples, folds: &FoldAssignment, fold: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, fam) in samples.families.iter().enumerate() {
        match folds.fold_of.get(fam) {
            Some(&f) if f == fold => test.push(i),
            Some(_) => train.push(i),
            None => return Err(Error::Data(format!("family {fam} has no fold"))),
        }
    }
    Ok((train, test))
}

/// Per-(method, d) aggregate over folds.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: Method,
    pub d: usize,
    pub per_fold_accuracy: Vec<f64>,
    pub threshold_per_fold: Vec<f64>,
    pub mean_accuracy: f64,
}

/// All fold rows of a sweep together with the effective configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Effective configuration (TOML), echoed into every report file.
    pub config_echo: String,
    pub rows: Vec<FoldRow>,
}

const CSV_HEADER: &str = "method,d,fold,accuracy,threshold,n_test_pairs";

impl SweepResult {
    /// Aggregates rows by (method, d), in first-appearance order.
    pub fn summaries(&self) -> Vec<EvalReport> {
        let mut out: Vec<EvalReport> = Vec::new();
        for r in &self.rows {
            let slot = match out.iter().position(|e| e.method == r.method && e.d == r.d) {
                Some(i) => i,
                None => {
                    out.push(EvalReport {
                        method: r.method,
                        d: r.d,
                        per_fold_accuracy: Vec::new(),
                        threshold_per_fold: Vec::new(),
                        mean_accuracy: 0.0,
                    });
                    out.len() - 1
                }
            };
            out[slot].per_fold_accuracy.push(r.accuracy);
            out[slot].threshold_per_fold.push(r.threshold);
        }
        for e in &mut out {
            e.mean_accuracy = e.per_fold_accuracy.iter().sum::<f64>() / e.per_fold_accuracy.len() as f64;
        }
        out
    }

    /// Best d per method (highest mean accuracy, smallest d on ties).
    pub fn best_per_method(&self) -> Vec<EvalReport> {
        let mut best: Vec<EvalReport> = Vec::new();
        for e in self.summaries() {
            match best.iter_mut().find(|b| b.method == e.method) {
                Some(b) if e.mean_accuracy > b.mean_accuracy => *b = e,
                Some(_) => {}
                None => best.push(e),
            }
        }
        best
    }

    pub fn mean_accuracy(&self, method: Method, d: usize) -> Option<f64> {
        self.summaries()
            .into_iter()
            .find(|e| e.method == method && e.d == d)
            .map(|e| e.mean_accuracy)
    }

    /// One row per (method, d, fold); the configuration is echoed as `#` comments.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for line in self.config_echo.lines() {
            let _ = writeln!(s, "# {line}");
        }
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.method.key(),
                r.d,
                r.fold,
                r.accuracy,
                r.threshold,
                r.n_test
            );
        }
        s
    }

    pub fn from_csv(text: &str, source: &Path) -> Result<Self> {
        let mut echo = String::new();
        let mut rows = Vec::new();
        let mut seen_header = false;
        for (i, line) in text.lines().enumerate() {
            let bad = |message: String| Error::Manifest {
                path: source.to_path_buf(),
                line: i + 1,
                message,
            };
            if let Some(c) = line.strip_prefix('#') {
                echo.push_str(c.strip_prefix(' ').unwrap_or(c));
                echo.push('\n');
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !seen_header {
                if line.trim() != CSV_HEADER {
                    return Err(bad(format!("expected header {CSV_HEADER:?}")));
                }
                seen_header = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(format!("expected 6 fields, found {}", f.len())));
            }
            let num = |s: &str, what: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("bad {what} {s:?}")));
            let int = |s: &str, what: &str| s.trim().parse::<usize>().map_err(|_| bad(format!("bad {what} {s:?}")));
            rows.push(FoldRow {
                method: f[0].trim().parse().map_err(|e: Error| bad(e.to_string()))?,
                d: int(f[1], "d")?,
                fold: int(f[2], "fold")?,
                accuracy: num(f[3], "accuracy")?,
                threshold: num(f[4], "threshold")?,
                n_test: int(f[5], "n_test_pairs")?,
            });
        }
        if !seen_header {
            return Err(Error::format(source, "missing CSV header"));
        }
        Ok(Self {
            config_echo: echo,
            rows,
        })
    }

    /// Aligned text tables: one per method (rows per d), a best-of table and
    /// the configuration echo.
    pub fn render_text(&self) -> String {
        let summaries = self.summaries();
        let mut methods: Vec<Method> = Vec::new();
        for e in &summaries {
            if !methods.contains(&e.method) {
                methods.push(e.method);
            }
        }
        let mut out = String::from("Kinship verification: mean accuracy over folds\n\n");
        for m in &methods {
            let rows: Vec<(String, String, String)> = summaries
                .iter()
                .filter(|e| e.method == *m)
                .enumerate()
                .map(|(i, e)| {
                    (
                        if i == 0 { m.label().to_string() } else { String::new() },
                        e.d.to_string(),
                        format!("{:.2}%", 100.0 * e.mean_accuracy),
                    )
                })
                .collect();
            render_table(&mut out, "Method", &rows);
            out.push('\n');
        }
        out.push_str("Best configuration per method\n");
        let best: Vec<(String, String, String)> = self
            .best_per_method()
            .iter()
            .map(|e| {
                (
                    e.method.label().to_string(),
                    e.d.to_string(),
                    format!("{:.2}%", 100.0 * e.mean_accuracy),
                )
            })
            .collect();
        render_table(&mut out, "Methods", &best);
        out.push_str("\nPer-fold accuracy\n");
        for e in &summaries {
            let folds: Vec<String> = e.per_fold_accuracy.iter().map(|a| format!("{:.4}", a)).collect();
            let _ = writeln!(out, "  {:<34} d={:<4} [{}]", e.method.label(), e.d, folds.join(", "));
        }
        out.push_str("\nConfiguration\n-------------\n");
        out.push_str(&self.config_echo);
        if !self.config_echo.ends_with('\n') {
            out.push('\n');
        }
        out
    }
}

fn render_table(out: &mut String, first: &str, rows: &[(String, String, String)]) {
    let headers = (first, "Number of features projection", "Mean Accuracy %");
    let w0 = rows.iter().map(|r| r.0.len()).chain([headers.0.len()]).max().unwrap_or(0);
    let w1 = headers.1.len();
    let _ = writeln!(out, "{:<w0$}  {:<w1$}  {}", headers.0, headers.1, headers.2);
    let _ = writeln!(out, "{}", "-".repeat(w0 + w1 + headers.2.len() + 4));
    for (a, b, c) in rows {
        let _ = writeln!(out, "{a:<w0$}  {b:<w1$}  {c}");
    }
}

/// `(threshold, true-positive rate, false-positive rate)` at every distinct
/// score, highest threshold first.
pub fn roc_points(scores: &[ScoredPair]) -> Vec<(f64, f64, f64)> {
    let pos = scores.iter().filter(|s| s.kin).count().max(1) as f64;
    let neg = scores.iter().filter(|s| !s.kin).count().max(1) as f64;
    let mut thresholds: Vec<f64> = scores.iter().map(|s| s.score).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    thresholds
        .into_iter()
        .map(|t| {
            let tp = scores.iter().filter(|s| s.kin && s.score >= t).count() as f64;
            let fp = scores.iter().filter(|s| !s.kin && s.score >= t).count() as f64;
            (t, tp / pos, fp / neg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Every threshold that can change a strict `>` decision: each score and
    /// one value below all of them.
    fn brute_force_best(scores: &[(f64, bool)]) -> f64 {
        let min = scores.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        std::iter::once(min - 1.0)
            .chain(scores.iter().map(|s| s.0))
            .map(|t| accuracy_at(scores, t))
            .fold(0.0, f64::max)
    }

    #[test]
    fn cosine_basics() {
        let u = [1.0, 2.0, -3.0];
        assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 5.0]).unwrap(), 0.0);
        let v = [0.3, -1.0, 2.0];
        let scaled: Vec<f64> = u.iter().map(|x| 7.5 * x).collect();
        let a = cosine_similarity(&u, &v).unwrap();
        assert!((cosine_similarity(&scaled, &v).unwrap() - a).abs() < 1e-12);
        assert!(cosine_similarity(&[0.0, 0.0], &v[..2]).is_err());
        assert!(cosine_similarity(&u, &v[..2]).is_err());
    }

    #[test]
    fn separable_threshold_is_midpoint() {
        let s = [(0.9, true), (0.8, true), (0.1, false), (0.2, false)];
        let t = select_threshold(&s).unwrap();
        assert!((t - 0.5).abs() < 1e-15);
        assert_eq!(accuracy_at(&s, t), 1.0);
    }

    #[test]
    fn interleaved_scores() {
        let s = [(0.1, true), (0.2, false), (0.3, true), (0.4, false)];
        let t = select_threshold(&s).unwrap();
        assert_eq!(accuracy_at(&s, t), brute_force_best(&s));
        assert_eq!(accuracy_at(&s, t), 0.5);

        let alt = [(0.1, true), (0.2, false), (0.3, false), (0.4, true), (0.5, true), (0.6, false)];
        let t = select_threshold(&alt).unwrap();
        assert_eq!(accuracy_at(&alt, t), brute_force_best(&alt));
    }

    #[test]
    fn tied_scores_break_deterministically() {
        let s = [(0.5, true), (0.5, false)];
        let t = select_threshold(&s).unwrap();
        assert_eq!(accuracy_at(&s, t), 0.5);
        assert_eq!(t, 1.5);
        assert_eq!(select_threshold(&[(0.5, false), (0.5, true)]).unwrap(), t);
    }

    #[test]
    fn single_label_is_rejected() {
        assert!(select_threshold(&[(0.1, true), (0.2, true)]).is_err());
    }

    #[test]
    fn csv_round_trip_and_tables() {
        let rows = (0..2)
            .flat_map(|fold| {
                [150, 160].map(|d| FoldRow {
                    method: Method::RetinexMask,
                    d,
                    fold,
                    accuracy: 0.9 + 0.01 * fold as f64 + d as f64 * 1e-4,
                    threshold: 0.123456789,
                    n_test: 20,
                })
            })
            .collect();
        let r = SweepResult {
            config_echo: "[eval]\nk = 2\n".into(),
            rows,
        };
        let back = SweepResult::from_csv(&r.to_csv(), Path::new("r.csv")).unwrap();
        assert_eq!(back, r);
        let s = r.summaries();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].per_fold_accuracy.len(), 2);
        assert!((s[0].mean_accuracy - 0.92).abs() < 1e-12);
        let txt = r.render_text();
        assert!(txt.contains("Number of features projection"));
        assert!(txt.contains("Retinex filter + Elliptical mask"));
        assert!(txt.contains("k = 2"));
        assert_eq!(r.best_per_method()[0].d, 160);
    }

    #[test]
    fn roc_is_monotone() {
        let s: Vec<ScoredPair> = [(0.9, true), (0.7, false), (0.6, true), (0.1, false)]
            .into_iter()
            .map(|(score, kin)| ScoredPair { score, kin, fold: 0 })
            .collect();
        let roc = roc_points(&s);
        assert_eq!(roc.len(), 4);
        assert_eq!(roc.last().unwrap().1, 1.0);
        assert!(roc.windows(2).all(|w| w[0].1 <= w[1].1 && w[0].2 <= w[1].2));
    }

    /// One family per row; children echo their parent with `noise` added
    /// (`noise = None` draws children independently).
    fn toy_samples(n: usize, noise: Option<f64>, seed: u64) -> Samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |scale: f64| -> Vec<f64> { (0..24).map(|_| scale * (rng.random::<f64>() - 0.5)).collect() };
        let mut parents = Vec::new();
        let mut children = Vec::new();
        for _ in 0..n {
            let p = draw(2.0);
            let c = match noise {
                Some(s) => p.iter().zip(draw(s)).map(|(a, b)| a + b).collect(),
                None => draw(2.0),
            };
            parents.push(Tensor::new(vec![4, 3, 2], p).unwrap());
            children.push(Tensor::new(vec![4, 3, 2], c).unwrap());
        }
        Samples {
            parents,
            children,
            families: (0..n as u64).collect(),
        }
    }

    fn toy_txqda() -> TxqdaConfig {
        TxqdaConfig {
            target_dims: vec![0],
            d: 12,
            ..TxqdaConfig::default()
        }
    }

    #[test]
    fn resubstitution_on_separable_data_is_perfect() {
        let samples = toy_samples(30, Some(0.05), 1);
        let all: Vec<usize> = (0..30).collect();
        let basis = train_fold(&samples, &all, 0, &toy_txqda(), 12, &EvalConfig::default()).unwrap();
        assert!(score_fold(&samples, &basis, (&all, &all), 0, Method::Basic, &[12], &EvalConfig::default()).is_err());
        let out = score_split(&samples, &basis, (&all, &all), 0, Method::Basic, &[12], &EvalConfig::default()).unwrap();
        assert_eq!(out[0].row.accuracy, 1.0);
    }

    #[test]
    fn unrelated_pairs_score_near_chance() {
        let samples = toy_samples(120, None, 2);
        let folds = crate::dataset::make_folds_for(&samples.families, 4, 3).unwrap();
        let eval = EvalConfig { k: 4, ..EvalConfig::default() };
        let out = cross_validate(&samples, &folds, Method::Basic, &toy_txqda(), &[12], &eval).unwrap();
        assert_eq!(out.len(), 4);
        let n_test: usize = out.iter().map(|o| o.row.n_test).sum();
        assert!(n_test >= 100);
        let mean = out.iter().map(|o| o.row.accuracy).sum::<f64>() / 4.0;
        assert!((0.35..=0.65).contains(&mean), "mean accuracy {mean}");
    }

    #[test]
    fn related_pairs_cross_validate_well() {
        let samples = toy_samples(60, Some(0.3), 4);
        let folds = crate::dataset::make_folds_for(&samples.families, 5, 1).unwrap();
        let out = cross_validate(&samples, &folds, Method::Basic, &toy_txqda(), &[6, 12], &EvalConfig::default()).unwrap();
        assert_eq!(out.len(), 2 * 5);
        assert!(out.windows(2).all(|w| (w[0].row.d, w[0].row.fold) < (w[1].row.d, w[1].row.fold)));
        let sweep = SweepResult {
            config_echo: String::new(),
            rows: out.iter().map(|o| o.row.clone()).collect(),
        };
        let summary = sweep.summaries();
        assert_eq!(summary[1].per_fold_accuracy.len(), 5);
        assert!(summary[1].mean_accuracy >= 0.9, "{summary:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn threshold_is_optimal(n in 2usize..200, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s: Vec<(f64, bool)> = (0..n)
                .map(|_| ((rng.random::<f64>() * 20.0).round() / 10.0 - 1.0, rng.random::<bool>()))
                .collect();
            s[0].1 = true;
            s[1].1 = false;
            let t = select_threshold(&s).unwrap();
            prop_assert_eq!(accuracy_at(&s, t), brute_force_best(&s));
        }

        #[test]
        fn accuracy_is_rank_invariant(n in 2usize..100, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s: Vec<(f64, bool)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<bool>())).collect();
            s[0].1 = true;
            s[1].1 = false;
            let warped: Vec<(f64, bool)> = s.iter().map(|&(x, k)| ((3.0 * x).exp() + x, k)).collect();
            let a = accuracy_at(&s, select_threshold(&s).unwrap());
            let b = accuracy_at(&warped, select_threshold(&warped).unwrap());
            prop_assert_eq!(a, b);
        }

        #[test]
        fn flipped_labels_do_at_least_complement(n in 2usize..100, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s: Vec<(f64, bool)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<bool>())).collect();
            s[0].1 = true;
            s[1].1 = false;
            let a = accuracy_at(&s, select_threshold(&s).unwrap());
            let flipped: Vec<(f64, bool)> = s.iter().map(|&(x, k)| (x, !k)).collect();
            let b = accuracy_at(&flipped, select_threshold(&flipped).unwrap());
            prop_assert!(b >= 1.0 - a - 1e-12);
        }
    }
}
