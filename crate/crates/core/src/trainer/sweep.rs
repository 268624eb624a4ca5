//! Independent runs over train fractions or batch sizes, executed in
//! parallel and merged in a fixed order.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{TrainConfig, DATA_FRACTIONS};
use super::record::RunRecord;
use super::{train, TrainError};
use crate::objectives::Method;
use crate::workbench::Dataset;

fn check_methods(methods: &[Method]) -> Result<Vec<Method>, TrainError> {
    if methods.is_empty() {
        return Err(TrainError::Config("no methods given".into()));
    }
    let mut out = methods.to_vec();
    out.sort();
    out.dedup();
    Ok(out)
}

fn run_all(configs: Vec<TrainConfig>, data: &Dataset) -> Result<Vec<RunRecord>, TrainError> {
    configs
        .into_par_iter()
        .map(|cfg| train(&cfg, data).map(|run| run.record))
        .collect()
}

/// Test macro-F1 per (method, fraction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataEfficiencyGrid {
    pub methods: Vec<Method>,
    /// Ascending.
    pub fractions: Vec<f64>,
    /// `records[m][f]` for `methods[m]` at `fractions[f]`.
    pub records: Vec<Vec<RunRecord>>,
}

impl DataEfficiencyGrid {
    pub fn score(&self, method: Method, fraction: f64) -> Option<f64> {
        let m = self.methods.iter().position(|&x| x == method)?;
        let f = self.fractions.iter().position(|&x| x == fraction)?;
        self.records[m][f].test_macro_f1()
    }

    /// One row per method, one column per fraction (ascending), test
    /// macro-F1 in percent.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("method");
        for f in &self.fractions {
            write!(out, "\t{}%", (f * 100.0).round()).unwrap();
        }
        out.push('\n');
        for (m, row) in self.methods.iter().zip(&self.records) {
            out.push_str(m.label());
            for r in row {
                write!(out, "\t{:.2}", r.test_macro_f1().unwrap_or(f64::NAN) * 100.0).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Trains every method on nested, stratified fractions of the train
/// split. Fractions must come from [`DATA_FRACTIONS`]; dev and test stay
/// whole.
pub fn data_efficiency_sweep(
    config: &TrainConfig,
    data: &Dataset,
    methods: &[Method],
    fractions: &[f64],
) -> Result<DataEfficiencyGrid, TrainError> {
    let methods = check_methods(methods)?;
    let mut fracs = fractions.to_vec();
    if fracs.is_empty() {
        return Err(TrainError::Config("no fractions given".into()));
    }
    if let Some(bad) = fracs.iter().find(|f| !DATA_FRACTIONS.contains(f)) {
        return Err(TrainError::Config(format!(
            "fraction {bad} not in {{0.10, 0.25, 0.50, 1.00}}"
        )));
    }
    fracs.sort_by(f64::total_cmp);
    fracs.dedup();
    let mut configs = Vec::new();
    for &m in &methods {
        for &f in &fracs {
            let mut cfg = config.clone();
            cfg.objective.method = m;
            cfg.data_fraction = f;
            cfg.validate()?;
            configs.push(cfg);
        }
    }
    let flat = run_all(configs, data)?;
    let records = flat.chunks(fracs.len()).map(<[RunRecord]>::to_vec).collect();
    Ok(DataEfficiencyGrid {
        methods,
        fractions: fracs,
        records,
    })
}

/// Dev and test macro-F1 per (method, batch size).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSizeSeries {
    pub methods: Vec<Method>,
    /// Ascending, deduplicated.
    pub sizes: Vec<usize>,
    /// `records[m][s]` for `methods[m]` at `sizes[s]`.
    pub records: Vec<Vec<RunRecord>>,
}

impl BatchSizeSeries {
    /// Best dev macro-F1 per size for `method`.
    pub fn dev_series(&self, method: Method) -> Option<Vec<f64>> {
        let m = self.methods.iter().position(|&x| x == method)?;
        Some(self.records[m].iter().map(|r| r.summary.best_dev_f1).collect())
    }

    /// Long format, one line per point: `method, batch_size, dev_macro_f1,
    /// test_macro_f1`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("method\tbatch_size\tdev_macro_f1\ttest_macro_f1\n");
        for (m, row) in self.methods.iter().zip(&self.records) {
            for (size, r) in self.sizes.iter().zip(row) {
                writeln!(
                    out,
                    "{}\t{size}\t{:.6}\t{:.6}",
                    m.label(),
                    r.summary.best_dev_f1,
                    r.test_macro_f1().unwrap_or(f64::NAN)
                )
                .unwrap();
            }
        }
        out
    }
}

/// Trains every method at each batch size with all else equal.
pub fn batch_size_sweep(
    config: &TrainConfig,
    data: &Dataset,
    methods: &[Method],
    sizes: &[usize],
) -> Result<BatchSizeSeries, TrainError> {
    let methods = check_methods(methods)?;
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.is_empty() || sizes[0] == 0 {
        return Err(TrainError::Config("batch sizes must be positive and non-empty".into()));
    }
    let mut configs = Vec::new();
    for &m in &methods {
        for &s in &sizes {
            let mut cfg = config.clone();
            cfg.objective.method = m;
            cfg.batch_size = s;
            cfg.validate()?;
            configs.push(cfg);
        }
    }
    let flat = run_all(configs, data)?;
    let records = flat.chunks(sizes.len()).map(<[RunRecord]>::to_vec).collect();
    Ok(BatchSizeSeries {
        methods,
        sizes,
        records,
    })
}
