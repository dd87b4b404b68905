//! Detection metrics, ROC/AUC and repeated-run summaries.

use crate::data::{check_labels, Label};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Counts with malicious (label 1) as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn confusion(pred: &[Label], truth: &[Label]) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::param("cannot score an empty prediction vector"));
    }
    check_labels(pred)?;
    check_labels(truth)?;
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => cm.tp += 1,
            (0, 0) => cm.tn += 1,
            (1, 0) => cm.fp += 1,
            _ => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics<T> {
    pub acc: T,
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

/// `a / b`, with `0/0 = 0`.
fn ratio<T: Scalar>(a: usize, b: usize) -> T {
    if b == 0 {
        T::zero()
    } else {
        T::from_count(a) / T::from_count(b)
    }
}

pub fn metrics<T: Scalar>(cm: &ConfusionMatrix) -> Result<Metrics<T>> {
    if cm.total() == 0 {
        return Err(Error::param("confusion matrix is empty"));
    }
    let acc = ratio(cm.tp + cm.tn, cm.total());
    let precision: T = ratio(cm.tp, cm.tp + cm.fp);
    let recall: T = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = if precision + recall > T::zero() {
        T::lit(2.0) * precision * recall / (precision + recall)
    } else {
        T::zero()
    };
    Ok(Metrics {
        acc,
        precision,
        recall,
        f1,
    })
}

/// ROC curve and its area.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve<T> {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one step per distinct score.
    pub points: Vec<(T, T)>,
    pub auc: T,
}

/// Mann–Whitney AUC over all positive/negative pairs (ties count ½), with
/// the ROC curve from a descending threshold sweep.
///
/// The trapezoidal area under the returned curve is checked against the
/// pair count; a disagreement beyond `1e-12` is reported as a numeric error.
pub fn roc_auc<T: Scalar>(scores: &[T], truth: &[Label]) -> Result<RocCurve<T>> {
    if scores.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: scores.len(),
        });
    }
    check_labels(truth)?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite { row: i, col: 0 });
    }
    let n_pos = truth.iter().filter(|&&l| l == 1).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite"));

    // Walk groups of equal score from the top. `twice_u` accumulates
    // 2·(wins + ties/2) so the statistic stays an exact integer.
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let mut points = vec![(T::zero(), T::zero())];
    let mut pts64 = vec![(0.0f64, 0.0f64)];
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut twice_u: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut gp, mut gn) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] == 1 {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        // positives in this group beat negatives below it and tie with
        // negatives inside it
        let neg_below = n_neg as u64 - fp - gn;
        twice_u += 2 * u128::from(gp) * u128::from(neg_below) + u128::from(gp) * u128::from(gn);
        tp += gp;
        fp += gn;
        let (x, y) = (fp as f64 / nn, tp as f64 / np);
        pts64.push((x, y));
        points.push((T::lit(x), T::lit(y)));
    }
    let mw = twice_u as f64 / (2.0 * np * nn);
    let trap: f64 = pts64
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5)
        .sum();
    if (trap - mw).abs() > 1e-12 {
        return Err(Error::Numeric(format!(
            "trapezoidal AUC {trap} disagrees with Mann-Whitney AUC {mw}"
        )));
    }
    Ok(RocCurve {
        points,
        auc: T::lit(mw),
    })
}

/// Trapezoidal area under a list of `(fpr, tpr)` points.
pub fn trapezoid_area<T: Scalar>(points: &[(T, T)]) -> T {
    let half = T::lit(0.5);
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * half)
        .sum()
}

/// Box-plot statistics of repeated runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary<T> {
    pub values: Vec<T>,
    pub mean: T,
    /// Population standard deviation.
    pub std: T,
    pub min: T,
    pub q1: T,
    pub median: T,
    pub q3: T,
    pub max: T,
}

/// Quantile by linear interpolation at position `p·(n−1)` of sorted data.
fn quantile<T: Scalar>(sorted: &[T], p: f64) -> T {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::lit(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn summarize_runs<T: Scalar>(values: &[T]) -> Result<RunSummary<T>> {
    if values.is_empty() {
        return Err(Error::param("no runs to summarize"));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: i, col: 0 });
    }
    let n = T::from_count(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Ok(RunSummary {
        values: values.to_vec(),
        mean,
        std: var.sqrt(),
        min: sorted[0],
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

/// Everything measured for one method on one run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport<T> {
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics<T>,
    pub roc: RocCurve<T>,
}

impl<T: Scalar> EvaluationReport<T> {
    pub fn auc(&self) -> T {
        self.roc.auc
    }
}

/// Thresholds scores at 0.5 and computes every metric against `truth`.
pub fn evaluate_scores<T: Scalar>(scores: &[T], truth: &[Label]) -> Result<EvaluationReport<T>> {
    let pred = crate::classify::threshold_labels(scores);
    let confusion = confusion(&pred, truth)?;
    Ok(EvaluationReport {
        metrics: metrics(&confusion)?,
        roc: roc_auc(scores, truth)?,
        confusion,
    })
}
