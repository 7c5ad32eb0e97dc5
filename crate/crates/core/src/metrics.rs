use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are actual classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if counts.iter().any(|r| r.len() != c) {
            return Err(Error::Metrics("confusion matrix must be square".into()));
        }
        Ok(Self {
            num_classes: c,
            counts: counts.into_iter().flatten().collect(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual * self.num_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes).map(|i| self.get(i, i)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.num_classes.max(1))
            .map(<[u64]>::to_vec)
            .collect()
    }

    /// Samples whose actual class is `class`.
    pub fn support(&self, class: usize) -> u64 {
        (0..self.num_classes).map(|p| self.get(class, p)).sum()
    }

    /// Fraction of `class` samples predicted correctly (recall), 0 when absent.
    pub fn class_accuracy(&self, class: usize) -> f64 {
        ratio(self.get(class, class), self.support(class))
    }

    pub fn per_class_accuracy(&self) -> Vec<f64> {
        (0..self.num_classes).map(|c| self.class_accuracy(c)).collect()
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion(preds: &[usize], labels: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::Metrics(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(num_classes);
    for (&p, &a) in preds.iter().zip(labels) {
        if p >= num_classes || a >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: p.max(a),
                num_classes,
            });
        }
        cm.counts[a * num_classes + p] += 1;
    }
    Ok(cm)
}

/// Percentage of correctly classified samples.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Metrics("accuracy of an empty confusion matrix".into()));
    }
    Ok(100.0 * cm.trace() as f64 / total as f64)
}

/// Relative accuracy drop in percent of the clean accuracy.
pub fn accuracy_drop(clean: f64, attacked: f64) -> Result<f64> {
    if clean <= 0.0 || !clean.is_finite() {
        return Err(Error::Metrics(format!("clean accuracy must be positive, got {clean}")));
    }
    Ok(100.0 * (clean - attacked) / clean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

/// Precision, recall and F-score per class; every 0/0 is taken as 0.
pub fn per_class_prf(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    let c = cm.num_classes();
    (0..c)
        .map(|k| {
            let tp = cm.get(k, k);
            let predicted: u64 = (0..c).map(|a| cm.get(a, k)).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, cm.support(k));
            let fscore = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                fscore,
            }
        })
        .collect()
}

/// Evaluation snapshot after one global epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub epoch: usize,
    pub accuracy: f64,
    /// Present only when a clean baseline is known.
    pub accuracy_drop: Option<f64>,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
    pub config_fingerprint: String,
}

impl MetricsReport {
    pub fn from_predictions(
        epoch: usize,
        preds: &[usize],
        labels: &[usize],
        num_classes: usize,
        fingerprint: &str,
    ) -> Result<Self> {
        let cm = confusion(preds, labels, num_classes)?;
        Ok(Self {
            epoch,
            accuracy: accuracy(&cm)?,
            accuracy_drop: None,
            per_class: per_class_prf(&cm),
            confusion: cm,
            config_fingerprint: fingerprint.to_string(),
        })
    }

    pub fn with_baseline(mut self, clean_accuracy: f64) -> Result<Self> {
        self.accuracy_drop = Some(accuracy_drop(clean_accuracy, self.accuracy)?);
        Ok(self)
    }
}
