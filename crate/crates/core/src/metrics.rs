//! Evaluation metrics for ordinal classifiers.
//!
//! Confusion matrices use rows for the ground truth and columns for the
//! prediction. Per-class F1 is 0 whenever its denominator is 0, and macro-F1
//! averages every class with equal weight.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{euclidean, Matrix};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(num_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("confusion matrix must be square and non-empty".into()));
        }
        Ok(Self { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let k = self.num_classes();
        (0..k).map(|j| (0..k).map(|i| self.counts[i][j]).sum()).collect()
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let k = self.num_classes();
        for l in [truth, predicted] {
            if l >= k {
                return Err(Error::Index { index: l, len: k });
            }
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes() != self.num_classes() {
            return Err(Error::Shape("cannot merge confusion matrices of different sizes".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Rows are truths, columns predictions, with a header line.
    pub fn to_csv(&self) -> String {
        counts_csv(self.counts.iter().map(|r| r.iter().map(|v| v.to_string()).collect()), self.num_classes())
    }
}

fn counts_csv(rows: impl Iterator<Item = Vec<String>>, k: usize) -> String {
    let mut out = String::from("truth");
    for j in 0..k {
        let _ = write!(out, ",pred_{j}");
    }
    out.push('\n');
    for (i, row) in rows.enumerate() {
        let _ = writeln!(out, "{i},{}", row.join(","));
    }
    out
}

/// Element-wise mean of several equally sized confusion matrices, as CSV.
pub fn mean_confusion(matrices: &[ConfusionMatrix]) -> Option<Vec<Vec<f64>>> {
    let first = matrices.first()?;
    let k = first.num_classes();
    let n = matrices.len() as f64;
    let mut mean = vec![vec![0.0; k]; k];
    for m in matrices {
        for (i, row) in m.counts.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                mean[i][j] += v as f64;
            }
        }
    }
    mean.iter_mut().flatten().for_each(|v| *v /= n);
    Some(mean)
}

pub fn mean_confusion_csv(mean: &[Vec<f64>]) -> String {
    counts_csv(mean.iter().map(|r| r.iter().map(|v| v.to_string()).collect()), mean.len())
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!(
            "{} truths but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(num_classes);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        cm.record(t, p)?;
    }
    Ok(cm)
}

fn non_empty(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::InvalidInput("confusion matrix is empty".into())),
        n => Ok(n as f64),
    }
}

/// Quadratic weighted kappa.
///
/// Both kappas are evaluated as one division of exact integer sums, so equal
/// count ratios give bit-identical values.
pub fn qwk(cm: &ConfusionMatrix) -> Result<f64> {
    let n = non_empty(cm)? as i128;
    let k = cm.num_classes();
    if k < 2 {
        return Err(Error::UndefinedMetric("QWK needs at least 2 classes".into()));
    }
    let rows = cm.row_sums();
    let cols = cm.col_sums();
    // The (K-1)^2 weight normalisation cancels in the ratio.
    let mut observed: i128 = 0;
    let mut expected: i128 = 0;
    for i in 0..k {
        for j in 0..k {
            let w = (i.abs_diff(j) * i.abs_diff(j)) as i128;
            observed += w * cm.get(i, j) as i128;
            expected += w * rows[i] as i128 * cols[j] as i128;
        }
    }
    if expected == 0 {
        return Err(Error::UndefinedMetric(
            "expected disagreement is zero (single class in both marginals)".into(),
        ));
    }
    Ok((expected - n * observed) as f64 / expected as f64)
}

/// Unweighted Cohen's kappa.
pub fn cohen_kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let n = non_empty(cm)? as i128;
    let chance: i128 = cm
        .row_sums()
        .iter()
        .zip(cm.col_sums())
        .map(|(&r, c)| r as i128 * c as i128)
        .sum();
    let denominator = n * n - chance;
    if denominator == 0 {
        return Err(Error::UndefinedMetric("chance agreement is 1".into()));
    }
    Ok((n * cm.trace() as i128 - chance) as f64 / denominator as f64)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    Ok(cm.trace() as f64 / non_empty(cm)?)
}

/// One-vs-rest F1 per class, `2tp / (2tp + fp + fn)`.
pub fn per_class_f1(cm: &ConfusionMatrix) -> Vec<f64> {
    let rows = cm.row_sums();
    let cols = cm.col_sums();
    (0..cm.num_classes())
        .map(|c| {
            let tp = cm.get(c, c) as f64;
            let denom = rows[c] as f64 + cols[c] as f64;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * tp / denom
            }
        })
        .collect()
}

pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    non_empty(cm)?;
    let f1 = per_class_f1(cm);
    Ok(f1.iter().sum::<f64>() / f1.len() as f64)
}

pub fn mae(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!(
            "{} truths but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::InvalidInput("MAE of an empty set".into()));
    }
    let total: usize = y_true.iter().zip(y_pred).map(|(&t, &p)| t.abs_diff(p)).sum();
    Ok(total as f64 / y_true.len() as f64)
}

/// Share of wrong predictions that miss by two or more classes (0 if none are wrong).
pub fn far_error_rate(y_true: &[usize], y_pred: &[usize]) -> f64 {
    let (mut wrong, mut far) = (0usize, 0usize);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        let d = t.abs_diff(p);
        wrong += usize::from(d > 0);
        far += usize::from(d >= 2);
    }
    if wrong == 0 {
        0.0
    } else {
        far as f64 / wrong as f64
    }
}

/// Collapses grades `{0,1}` (remission) and `{2,3}` (active disease) into a 2×2 matrix.
pub fn remission_collapse(cm: &ConfusionMatrix) -> Result<ConfusionMatrix> {
    if cm.num_classes() != 4 {
        return Err(Error::Config(format!(
            "remission collapse needs 4 classes, got {}",
            cm.num_classes()
        )));
    }
    let mut out = ConfusionMatrix::zeros(2);
    for i in 0..4 {
        for j in 0..4 {
            out.counts[i / 2][j / 2] += cm.get(i, j);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr);
        }
        out
    }
}

/// ROC curve with one point per distinct score (plus the `+inf` origin) and
/// trapezoidal AUC. Equal scores form a single threshold, which counts tied
/// positive/negative pairs as one half.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<RocCurve> {
    if scores.len() != positive.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            positive.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite score {s}")));
    }
    let pos = positive.iter().filter(|&&p| p).count();
    let neg = positive.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "ROC needs both positive and negative samples".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().expect("origin");
        let point = RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        };
        auc += (point.fpr - prev.fpr) * (point.tpr + prev.tpr) / 2.0;
        points.push(point);
    }
    Ok(RocCurve { points, auc })
}

/// Mean silhouette coefficient with Euclidean distances. Singleton clusters
/// score 0, as does any sample with `a = b = 0`.
pub fn silhouette(points: &Matrix, labels: &[usize]) -> Result<f64> {
    if points.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} points but {} labels",
            points.rows(),
            labels.len()
        )));
    }
    // Map arbitrary label values to dense cluster ids.
    let mut ids = BTreeMap::new();
    for &l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    if ids.len() < 2 {
        return Err(Error::UndefinedMetric(
            "silhouette needs at least 2 clusters".into(),
        ));
    }
    let cluster: Vec<usize> = labels.iter().map(|l| ids[l]).collect();
    let mut sizes = vec![0usize; ids.len()];
    for &c in &cluster {
        sizes[c] += 1;
    }

    let n = labels.len();
    let mut total = 0.0;
    let mut sums = vec![0.0; ids.len()];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[cluster[j]] += euclidean(points.row(i), points.row(j));
            }
        }
        let own = cluster[i];
        if sizes[own] < 2 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..ids.len())
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemissionMetrics {
    pub kappa: f64,
    pub f1: f64,
    pub accuracy: f64,
}

/// Everything reported for one evaluated test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub qwk: f64,
    pub kappa: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub mae: f64,
    /// Fraction of mispredictions at class distance two or more.
    pub far_error_rate: f64,
    /// One-vs-rest AUC per class; `None` where undefined or scores are unavailable.
    pub per_class_auc: Vec<Option<f64>>,
    pub remission: Option<RemissionMetrics>,
    pub silhouette: Option<f64>,
}

/// Scores and features that some metrics need, when available.
#[derive(Debug, Default, Clone, Copy)]
pub struct EvalExtras<'a> {
    /// Per-sample per-class scores for one-vs-rest ROC.
    pub class_scores: Option<&'a [Vec<f64>]>,
    /// Per-sample embedding for the silhouette score.
    pub features: Option<&'a Matrix>,
}

pub fn evaluate(
    y_true: &[usize],
    y_pred: &[usize],
    num_classes: usize,
    extras: EvalExtras<'_>,
) -> Result<(MetricBundle, ConfusionMatrix)> {
    let cm = confusion(y_true, y_pred, num_classes)?;
    let per_class_auc = match extras.class_scores {
        Some(scores) => (0..num_classes)
            .map(|k| {
                let s: Vec<f64> = scores.iter().map(|row| row[k]).collect();
                let pos: Vec<bool> = y_true.iter().map(|&t| t == k).collect();
                roc_auc(&s, &pos).ok().map(|r| r.auc)
            })
            .collect(),
        None => vec![None; num_classes],
    };
    let remission = if num_classes == 4 {
        let binary = remission_collapse(&cm)?;
        Some(RemissionMetrics {
            kappa: cohen_kappa(&binary)?,
            f1: macro_f1(&binary)?,
            accuracy: accuracy(&binary)?,
        })
    } else {
        None
    };
    let silhouette = match extras.features {
        Some(f) => silhouette(f, y_true).ok(),
        None => None,
    };
    let bundle = MetricBundle {
        qwk: qwk(&cm)?,
        kappa: cohen_kappa(&cm)?,
        accuracy: accuracy(&cm)?,
        macro_f1: macro_f1(&cm)?,
        mae: mae(y_true, y_pred)?,
        far_error_rate: far_error_rate(y_true, y_pred),
        per_class_auc,
        remission,
        silhouette,
    };
    Ok((bundle, cm))
}
