//! Confusion matrix and classification metrics with macro averaging.

use crate::grade::UsabilityGrade;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("actual and predicted lists have different lengths ({actual} vs {predicted})")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("label {0} is not in the class list")]
    UnknownLabel(UsabilityGrade),
    #[error("confusion matrix holds no samples")]
    EmptyMatrix,
}

/// K x K prediction counts. Rows are actual classes, columns predicted.
#[derive(Debug, Clone, Serialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<UsabilityGrade>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, i: usize) -> u64 {
        self.counts[i][i]
    }

    pub fn false_positives(&self, i: usize) -> u64 {
        (0..self.classes.len())
            .filter(|&r| r != i)
            .map(|r| self.counts[r][i])
            .sum()
    }

    pub fn false_negatives(&self, i: usize) -> u64 {
        (0..self.classes.len())
            .filter(|&c| c != i)
            .map(|c| self.counts[i][c])
            .sum()
    }
}

/// Accuracy plus per-class and macro-averaged precision/recall/F1.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub classes: Vec<UsabilityGrade>,
    pub counts: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub per_class: PerClassMetrics,
    #[serde(rename = "macro")]
    pub macro_avg: MacroMetrics,
    /// Number of classes whose precision or recall had a zero denominator
    /// and was reported as 0.
    pub warnings: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerClassMetrics {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Tally actual/predicted pairs into a confusion matrix over `classes`.
pub fn build_confusion(
    actual: &[UsabilityGrade],
    predicted: &[UsabilityGrade],
    classes: &[UsabilityGrade],
) -> Result<ConfusionMatrix, EvalError> {
    if actual.len() != predicted.len() || actual.is_empty() {
        return Err(EvalError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    let index = |g: UsabilityGrade| {
        classes
            .iter()
            .position(|&c| c == g)
            .ok_or(EvalError::UnknownLabel(g))
    };
    let k = classes.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (&a, &p) in actual.iter().zip(predicted) {
        counts[index(a)?][index(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        classes: classes.to_vec(),
        counts,
    })
}

/// One-vs-rest precision/recall/F1 per class, macro averages, and accuracy.
/// Zero denominators yield 0 and bump the warning counter.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let k = cm.classes.len();
    let mut precision = Vec::with_capacity(k);
    let mut recall = Vec::with_capacity(k);
    let mut f1 = Vec::with_capacity(k);
    let mut warnings = 0u32;

    for i in 0..k {
        let tp = cm.true_positives(i) as f64;
        let fp = cm.false_positives(i) as f64;
        let fn_ = cm.false_negatives(i) as f64;

        let p = if tp + fp > 0.0 {
            tp / (tp + fp)
        } else {
            warnings += 1;
            0.0
        };
        let r = if tp + fn_ > 0.0 {
            tp / (tp + fn_)
        } else {
            warnings += 1;
            0.0
        };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        precision.push(p);
        recall.push(r);
        f1.push(f);
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let trace: u64 = (0..k).map(|i| cm.counts[i][i]).sum();

    Ok(MetricsReport {
        classes: cm.classes.clone(),
        counts: cm.counts.clone(),
        accuracy: trace as f64 / total as f64,
        macro_avg: MacroMetrics {
            precision: mean(&precision),
            recall: mean(&recall),
            f1: mean(&f1),
        },
        per_class: PerClassMetrics {
            precision,
            recall,
            f1,
        },
        warnings,
    })
}
