//! Train one method on a synthetic 3-class task and save its run.
//!
//! `cargo run --release --example train_toy -- lcl out/lcl`

use contrastive_workbench::objectives::Method;
use contrastive_workbench::trainer::{save_run, train, TrainConfig};
use contrastive_workbench::workbench::synth_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let method: Method = args.next().as_deref().unwrap_or("scl").parse()?;
    let data = synth_corpus(3, 600, 1, 0.6)?;
    let mut config = TrainConfig::toy(method);
    config.task = "synthetic".into();
    let run = train(&config, &data)?;

    println!("epoch  loss      dev macro-F1");
    for e in &run.record.epochs {
        println!("{:>5}  {:.5}  {:.4}", e.epoch, e.train.total, e.dev_macro_f1);
    }
    let s = &run.record.summary;
    println!(
        "best epoch {} (dev {:.4}), test macro-F1 {:.4}, stopped early: {}",
        s.best_epoch,
        s.best_dev_f1,
        run.record.test_macro_f1().unwrap_or(f64::NAN),
        s.stopped_early
    );
    if let Some(dir) = args.next() {
        save_run(&run, &dir)?;
        println!("saved checkpoint and run record to {dir}");
    }
    Ok(())
}
