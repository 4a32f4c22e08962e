//! Confusion matrix and the two recall metrics reported by the experiments.
//!
//! UAR (unweighted average recall) is the mean of per-class recalls over
//! classes that actually appear; WAR (weighted average recall) is plain
//! accuracy.

use crate::error::{Error, Result};

/// K×K counts; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::Contract(format!(
                "{} counts for a {classes}x{classes} matrix",
                counts.len()
            )));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        debug_assert!(truth < self.classes && predicted < self.classes);
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Merge another matrix of the same shape into this one.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.classes != other.classes {
            return Err(Error::Contract(format!(
                "cannot merge {}-class and {}-class matrices",
                self.classes, other.classes
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(other.counts.iter()) {
            *a += *b;
        }
        Ok(())
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        (0..self.classes)
            .map(|r| self.counts[r * self.classes..(r + 1) * self.classes].to_vec())
            .collect()
    }
}

/// Recall metrics of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Metrics {
    pub uar: f64,
    pub war: f64,
}

/// UAR = mean of diagonal/row-total over classes with support;
/// WAR = trace/total. A matrix with no entries is a contract error.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Contract(
            "metrics of an empty confusion matrix".into(),
        ));
    }
    let mut recall_sum = 0.0f64;
    let mut supported = 0usize;
    let mut correct = 0u64;
    for class in 0..cm.classes() {
        let row_total: u64 = (0..cm.classes()).map(|c| cm.count(class, c)).sum();
        let diag = cm.count(class, class);
        correct += diag;
        if row_total > 0 {
            recall_sum += diag as f64 / row_total as f64;
            supported += 1;
        }
    }
    Ok(Metrics {
        uar: recall_sum / supported as f64,
        war: correct as f64 / total as f64,
    })
}

/// Index of the largest logit; ties break toward the lower class index.
pub fn argmax_tie_low(logits: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, v) in logits.iter().enumerate().skip(1) {
        if *v > logits[best] {
            best = i;
        }
    }
    best
}
