//! Macro-F1 and the confusion matrix behind it.
//!
//! Precision, recall and F1 of a class with a zero denominator are 0.
//! Classes with no gold support still count towards the macro average.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("{gold} gold labels but {predicted} predictions")]
    LengthMismatch { gold: usize, predicted: usize },
    #[error("label {label} at position {index} out of range for {classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("need at least one class")]
    NoClasses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub macro_f1: f64,
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    /// Gold count per class.
    pub support: Vec<usize>,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn macro_f1(gold: &[usize], predicted: &[usize], classes: usize) -> Result<MetricsReport, MetricsError> {
    if classes == 0 {
        return Err(MetricsError::NoClasses);
    }
    if gold.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            gold: gold.len(),
            predicted: predicted.len(),
        });
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (index, (&g, &p)) in gold.iter().zip(predicted).enumerate() {
        for label in [g, p] {
            if label >= classes {
                return Err(MetricsError::LabelOutOfRange {
                    index,
                    label,
                    classes,
                });
            }
        }
        confusion[g][p] += 1;
    }
    let support: Vec<usize> = confusion.iter().map(|row| row.iter().sum()).collect();
    let predicted_count: Vec<usize> = (0..classes)
        .map(|c| confusion.iter().map(|row| row[c]).sum())
        .collect();
    let mut precision = Vec::with_capacity(classes);
    let mut recall = Vec::with_capacity(classes);
    let mut f1 = Vec::with_capacity(classes);
    for c in 0..classes {
        let tp = confusion[c][c];
        let p = ratio(tp, predicted_count[c]);
        let r = ratio(tp, support[c]);
        precision.push(p);
        recall.push(r);
        f1.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
    }
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    Ok(MetricsReport {
        macro_f1: f1.iter().sum::<f64>() / classes as f64,
        accuracy: ratio(correct, gold.len()),
        precision,
        recall,
        f1,
        support,
        confusion,
    })
}
