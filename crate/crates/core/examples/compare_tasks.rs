//! All six methods on three synthetic tasks of rising difficulty, rendered
//! as a task-by-method grid with an average row.

use contrastive_workbench::objectives::Method;
use contrastive_workbench::trainer::{train, TrainConfig};
use contrastive_workbench::workbench::cli::compare_grid;
use contrastive_workbench::workbench::synth_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut records = Vec::new();
    for (task, difficulty) in [("easy", 0.3), ("medium", 0.6), ("hard", 0.8)] {
        let data = synth_corpus(3, 300, 7, difficulty)?;
        for method in Method::ALL {
            let mut config = TrainConfig::toy(method);
            config.task = task.into();
            records.push(train(&config, &data)?.record);
        }
    }
    print!("{}", compare_grid(&records));
    Ok(())
}
