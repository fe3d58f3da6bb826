//! Stratified k-fold cross-validation and binary classification metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::recode::{AnalysisId, RecodedTable};
use crate::reptree::{fit_rows, Label, TrainingSet, TreeError, TreeParams};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("fold count {k} outside 2..={rows}")]
    Folds { k: usize, rows: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Seeded stratified fold assignment.
///
/// Each class's row indices are shuffled (No first, then Yes, from one
/// ChaCha8 stream) and dealt round-robin, the Yes class continuing where
/// the No class stopped. Each fold is returned in ascending index order.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 || k > labels.len() {
        return Err(EvalError::Folds {
            k,
            rows: labels.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in Label::ALL {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        members.shuffle(&mut rng);
        for row in members {
            folds[next].push(row);
            next = (next + 1) % k;
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Counts indexed `[actual][predicted]`, No = 0, Yes = 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 2]; 2]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn record(&mut self, actual: Label, predicted: Label) {
        self.counts[actual.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for a in 0..2 {
            for p in 0..2 {
                self.counts[a][p] += other.counts[a][p];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Support-weighted mean of the per-class F1 scores.
    pub weighted_f: f64,
}

fn frac(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, per-class precision/recall/F1 and weighted F. Zero
/// denominators yield 0.
pub fn compute_metrics(confusion: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    let total = confusion.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let m = &confusion.counts;
    let per_class: Vec<ClassMetrics> = Label::ALL
        .iter()
        .map(|&label| {
            let c = label.index();
            let tp = m[c][c];
            let predicted = m[0][c] + m[1][c];
            let actual = m[c][0] + m[c][1];
            let precision = frac(tp, predicted);
            let recall = frac(tp, actual);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                label,
                support: actual,
                precision,
                recall,
                f1,
            }
        })
        .collect();
    let weighted_f = per_class
        .iter()
        .map(|c| c.support as f64 * c.f1)
        .sum::<f64>()
        / total as f64;
    Ok(Metrics {
        accuracy: frac(confusion.correct(), total),
        per_class,
        weighted_f,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub analysis: Option<AnalysisId>,
    pub folds: usize,
    pub seed: u64,
    pub tree: TreeParams,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        self.metrics.accuracy
    }

    pub fn weighted_f(&self) -> f64 {
        self.metrics.weighted_f
    }

    /// Two-line summary: correctly classified instances and average F.
    pub fn summary(&self) -> String {
        format!(
            "Correctly Classified Instances  {:>6}  {:.4} %\nAvg. F-Measure  {:.3}\n",
            self.confusion.correct(),
            100.0 * self.metrics.accuracy,
            self.metrics.weighted_f
        )
    }
}

/// Stratified k-fold cross-validation of the pruned tree learner. The
/// learner's grow/prune shuffle for fold i uses `params.seed ^ i`; metrics
/// are computed once over the pooled confusion matrix.
pub fn cross_validate(
    table: &RecodedTable,
    params: &TreeParams,
    k: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    params.validate()?;
    let set = TrainingSet::new(table);
    let folds = stratified_folds(set.labels(), k, seed)?;
    let mut in_test = vec![usize::MAX; set.len()];
    for (i, fold) in folds.iter().enumerate() {
        for &r in fold {
            in_test[r] = i;
        }
    }
    let mut confusion = ConfusionMatrix::default();
    for (i, fold) in folds.iter().enumerate() {
        let train: Vec<usize> = (0..set.len()).filter(|&r| in_test[r] != i).collect();
        let fold_params = TreeParams {
            seed: params.seed ^ i as u64,
            ..*params
        };
        let tree = fit_rows(&set, &train, &fold_params)?;
        for &r in fold {
            confusion.record(set.labels()[r], tree.predict(table, r)?);
        }
    }
    Ok(EvalReport {
        analysis: table.analysis(),
        folds: k,
        seed,
        tree: *params,
        metrics: compute_metrics(&confusion)?,
        confusion,
    })
}
