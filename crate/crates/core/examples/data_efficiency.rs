//! Test macro-F1 on nested stratified fractions of the train split.

use contrastive_workbench::objectives::Method;
use contrastive_workbench::trainer::{data_efficiency_sweep, TrainConfig, DATA_FRACTIONS};
use contrastive_workbench::workbench::synth_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = synth_corpus(3, 600, 1, 0.6)?;
    let config = TrainConfig::toy(Method::Ce);
    let grid = data_efficiency_sweep(&config, &data, &[Method::Ce, Method::Scl, Method::Lcl], &DATA_FRACTIONS)?;
    print!("{}", grid.to_tsv());
    for (m, row) in grid.methods.iter().zip(&grid.records) {
        let sizes: Vec<usize> = row.iter().map(|r| r.summary.sizes.train).collect();
        println!("{m} train sizes {sizes:?}");
    }
    Ok(())
}
