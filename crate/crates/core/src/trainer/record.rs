//! Run records and their line-delimited JSON form: one `epoch` line per
//! epoch followed by a single `summary` line.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::step::LossComponents;
use super::TrainError;
use crate::workbench::MetricsReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Means over the epoch's batches.
    pub train: LossComponents,
    pub dev_macro_f1: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub train_accuracy: Option<f64>,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: TrainConfig,
    pub classes: Vec<String>,
    pub sizes: SplitSizes,
    pub vocab_size: usize,
    pub parameter_count: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub stopped_early: bool,
    /// Evaluated once, on the best-dev checkpoint. Absent if training diverged.
    pub test: Option<MetricsReport>,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub summary: RunSummary,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LineRef<'a> {
    Epoch(&'a EpochRecord),
    Summary(&'a RunSummary),
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Epoch(EpochRecord),
    Summary(Box<RunSummary>),
}

impl RunRecord {
    pub fn config(&self) -> &TrainConfig {
        &self.summary.config
    }

    pub fn test_macro_f1(&self) -> Option<f64> {
        self.summary.test.as_ref().map(|t| t.macro_f1)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let lines = self
            .epochs
            .iter()
            .map(LineRef::Epoch)
            .chain(std::iter::once(LineRef::Summary(&self.summary)));
        for line in lines {
            out.push_str(&serde_json::to_string(&line).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TrainError> {
        let mut epochs = Vec::new();
        let mut summary = None;
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: Line = serde_json::from_str(raw)
                .map_err(|e| TrainError::Record(format!("line {}: {e}", i + 1)))?;
            match line {
                Line::Epoch(e) => epochs.push(e),
                Line::Summary(s) if summary.is_none() => summary = Some(*s),
                Line::Summary(_) => {
                    return Err(TrainError::Record(format!("line {}: second summary record", i + 1)))
                }
            }
        }
        let summary = summary.ok_or_else(|| TrainError::Record("no summary record".into()))?;
        Ok(Self { summary, epochs })
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        Self::from_jsonl(&fs::read_to_string(path)?)
    }

    /// Largest absolute difference between the numeric outcomes of two
    /// runs, ignoring timings. `None` when they differ structurally
    /// (epoch count, best epoch, config, sizes).
    pub fn max_outcome_difference(&self, other: &RunRecord) -> Option<f64> {
        let (a, b) = (&self.summary, &other.summary);
        if a.config != b.config
            || a.sizes != b.sizes
            || a.best_epoch != b.best_epoch
            || a.epochs_run != b.epochs_run
            || self.epochs.len() != other.epochs.len()
            || a.test.is_some() != b.test.is_some()
        {
            return None;
        }
        let mut diff = (a.best_dev_f1 - b.best_dev_f1).abs();
        if let (Some(x), Some(y)) = (&a.test, &b.test) {
            if x.confusion != y.confusion {
                return None;
            }
            diff = diff.max((x.macro_f1 - y.macro_f1).abs());
        }
        for (x, y) in self.epochs.iter().zip(&other.epochs) {
            let pairs = [
                (Some(x.train.total), Some(y.train.total)),
                (Some(x.train.ce), Some(y.train.ce)),
                (x.train.ce_perturbed, y.train.ce_perturbed),
                (x.train.weighting_ce, y.train.weighting_ce),
                (x.train.contrastive, y.train.contrastive),
                (x.train.contrastive_sum, y.train.contrastive_sum),
                (Some(x.dev_macro_f1), Some(y.dev_macro_f1)),
                (x.train_accuracy, y.train_accuracy),
            ];
            for pair in pairs {
                match pair {
                    (Some(u), Some(v)) => diff = diff.max((u - v).abs()),
                    (None, None) => {}
                    _ => return None,
                }
            }
        }
        Some(diff)
    }
}
