//! Best dev macro-F1 of every method at batch sizes 4, 8 and 16.

use contrastive_workbench::objectives::Method;
use contrastive_workbench::trainer::{batch_size_sweep, TrainConfig};
use contrastive_workbench::workbench::synth_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = synth_corpus(3, 600, 1, 0.6)?;
    let config = TrainConfig::toy(Method::Ce);
    let series = batch_size_sweep(&config, &data, &Method::ALL, &[4, 8, 16])?;
    print!("{}", series.to_tsv());
    for m in &series.methods {
        let dev = series.dev_series(*m).unwrap_or_default();
        let rising = dev.windows(2).all(|w| w[1] >= w[0]);
        println!("{m}: non-decreasing in batch size: {rising}");
    }
    Ok(())
}
