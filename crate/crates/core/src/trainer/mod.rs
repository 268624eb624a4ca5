//! Adam, the training loop with early stopping on dev macro-F1, and the
//! data-efficiency and batch-size sweeps.

mod adam;
mod config;
mod record;
mod step;
mod sweep;

use std::path::Path;
use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use config::{ModelShape, SplitCaps, TrainConfig, DATA_FRACTIONS};
pub use record::{EpochRecord, RunRecord, RunSummary, SplitSizes};
pub use step::{objective_step, FrozenPerturbations, LossComponents, StepOutput};
pub use sweep::{batch_size_sweep, data_efficiency_sweep, BatchSizeSeries, DataEfficiencyGrid};

use crate::adversarial::AdversarialError;
use crate::autodiff::{backward, AutodiffError};
use crate::encoder::{save_checkpoint, EncoderError, Model, Vocabulary};
use crate::objectives::ObjectiveError;
use crate::workbench::{macro_f1, CorpusError, Dataset, LabeledCorpus, MetricsError, Split};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} split is empty")]
    EmptySplit(Split),
    #[error("optimizer state mismatch: {0}")]
    OptimizerShape(String),
    #[error("non-finite gradient {value} at tensor {tensor}, index {index}; step aborted")]
    NonFiniteGradient { tensor: usize, index: usize, value: f64 },
    #[error("training diverged at epoch {epoch}, step {step}: {reason}")]
    Diverged {
        epoch: usize,
        step: usize,
        reason: String,
        /// Completed epochs up to the last good one.
        record: Box<RunRecord>,
    },
    #[error("run record: {0}")]
    Record(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Adversarial(#[from] AdversarialError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// Independent random streams derived from the run seed.
const CAP_STREAM: u64 = 0xCA95;
const SHUFFLE_STREAM: u64 = 0x5A0F_F1E5;
const DROPOUT_STREAM: u64 = 0xD20_9007;

/// Dropout stream for one optimizer step.
fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ DROPOUT_STREAM);
    rng.set_stream(step);
    rng.set_word_pos(0);
    rng
}

/// Splits after capping and train-fraction subsampling.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: LabeledCorpus,
    pub dev: LabeledCorpus,
    pub test: LabeledCorpus,
}

/// Applies the split caps and then the train fraction.
pub fn prepare_data(config: &TrainConfig, data: &Dataset) -> Result<PreparedData, TrainError> {
    for s in Split::ALL {
        if data.split(s).is_empty() {
            return Err(TrainError::EmptySplit(s));
        }
    }
    let seed = config.seed ^ CAP_STREAM;
    let train = data.train.capped(config.caps.train, seed);
    let train = train.stratified_subsample(config.data_fraction, config.seed)?;
    Ok(PreparedData {
        train,
        dev: data.dev.capped(config.caps.dev, seed.wrapping_add(1)),
        test: data.test.capped(config.caps.test, seed.wrapping_add(2)),
    })
}

/// A finished run: its record and the model restored to the best-dev
/// checkpoint.
pub struct TrainedRun {
    pub record: RunRecord,
    pub model: Model,
}

struct Encoded {
    ids: Vec<Vec<usize>>,
    labels: Vec<usize>,
}

fn encode_split(model: &Model, corpus: &LabeledCorpus) -> Result<Encoded, TrainError> {
    Ok(Encoded {
        ids: model.tokenize_batch(&corpus.texts())?,
        labels: corpus.labels(),
    })
}

fn score(model: &Model, split: &Encoded, classes: usize) -> Result<crate::workbench::MetricsReport, TrainError> {
    let predicted = model.predict(&split.ids)?;
    Ok(macro_f1(&split.labels, &predicted, classes)?)
}

/// Trains one model.
///
/// The vocabulary comes from the (capped, subsampled) train split only.
/// After each epoch the dev split is scored; training stops once
/// `patience` consecutive epochs fail to beat the best dev macro-F1
/// (earliest epoch wins ties). The best-dev parameters are restored and
/// the test split is scored exactly once.
pub fn train(config: &TrainConfig, data: &Dataset) -> Result<TrainedRun, TrainError> {
    config.validate()?;
    let started = Instant::now();
    let prepared = prepare_data(config, data)?;
    let classes = data.classes().to_vec();
    let vocab = Vocabulary::build(prepared.train.texts(), config.model.vocab_cap);
    let model_config = config.model_config(vocab.len(), classes.len());
    let model = Model::new(model_config, vocab, classes.clone(), config.seed)?;
    let train_split = encode_split(&model, &prepared.train)?;
    let dev_split = encode_split(&model, &prepared.dev)?;
    let test_split = encode_split(&model, &prepared.test)?;

    let params = model.parameters();
    let mut adam = AdamState::for_tensors(config.adam, &params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let n = train_split.ids.len();
    let mut order: Vec<usize> = (0..n).collect();

    let mut summary = RunSummary {
        config: config.clone(),
        classes: classes.clone(),
        sizes: SplitSizes {
            train: n,
            dev: dev_split.ids.len(),
            test: test_split.ids.len(),
        },
        vocab_size: model.vocab.len(),
        parameter_count: model.parameter_count(),
        epochs_run: 0,
        best_epoch: 0,
        best_dev_f1: f64::NEG_INFINITY,
        stopped_early: false,
        test: None,
        wall_clock_secs: 0.0,
    };
    let mut epochs: Vec<EpochRecord> = Vec::new();
    let mut best_snapshot = model.snapshot();
    let mut stale = 0;
    let mut global_step = 0u64;

    for epoch in 1..=config.max_epochs {
        if config.balanced_batches {
            order = prepared
                .train
                .stratified_order(config.seed.wrapping_add(epoch as u64));
        } else {
            order.shuffle(&mut shuffle_rng);
        }
        let mut components = Vec::new();
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let ids: Vec<Vec<usize>> = chunk.iter().map(|&i| train_split.ids[i].clone()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_split.labels[i]).collect();
            let mut dropout_rng = step_rng(config.seed, global_step);
            global_step += 1;
            let out = objective_step(&model, &ids, &labels, &config.objective, Some(&mut dropout_rng), None)?;
            let diverged = |reason: String, summary: &RunSummary, epochs: &[EpochRecord]| {
                let mut summary = summary.clone();
                summary.wall_clock_secs = started.elapsed().as_secs_f64();
                TrainError::Diverged {
                    epoch,
                    step,
                    reason,
                    record: Box::new(RunRecord {
                        summary,
                        epochs: epochs.to_vec(),
                    }),
                }
            };
            if !out.components.total.is_finite() {
                return Err(diverged(format!("loss is {}", out.components.total), &summary, &epochs));
            }
            for p in &params {
                p.zero_grad();
            }
            backward(&out.total)?;
            if let Err(e) = adam_update(&params, &mut adam, config.learning_rate) {
                return Err(match e {
                    TrainError::NonFiniteGradient { .. } => diverged(e.to_string(), &summary, &epochs),
                    other => other,
                });
            }
            debug!("epoch {epoch} step {step}: loss {:.6}", out.components.total);
            components.push(out.components);
        }
        let dev = score(&model, &dev_split, classes.len())?;
        let train_accuracy = if config.track_train_accuracy {
            Some(score(&model, &train_split, classes.len())?.accuracy)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            train: LossComponents::mean(&components),
            dev_macro_f1: dev.macro_f1,
            train_accuracy,
            elapsed_secs: started.elapsed().as_secs_f64(),
        };
        info!(
            "{} {} epoch {epoch}: loss {:.4}, dev macro-F1 {:.4}",
            config.task,
            config.method(),
            record.train.total,
            record.dev_macro_f1
        );
        epochs.push(record);
        summary.epochs_run = epoch;
        if dev.macro_f1 > summary.best_dev_f1 {
            summary.best_dev_f1 = dev.macro_f1;
            summary.best_epoch = epoch;
            best_snapshot = model.snapshot();
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                summary.stopped_early = true;
                info!("no dev improvement for {stale} epochs; stopping after epoch {epoch}");
                break;
            }
        }
    }
    model.restore(&best_snapshot)?;
    summary.test = Some(score(&model, &test_split, classes.len())?);
    summary.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(TrainedRun {
        record: RunRecord { summary, epochs },
        model,
    })
}

pub const CHECKPOINT_FILE: &str = "checkpoint.clwb";
pub const RECORD_FILE: &str = "run.jsonl";

/// Writes the best-dev checkpoint and the run record into `dir`.
pub fn save_run(run: &TrainedRun, dir: impl AsRef<Path>) -> Result<(), TrainError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let meta = serde_json::json!({
        "task": run.record.summary.config.task,
        "method": run.record.summary.config.method(),
        "best_epoch": run.record.summary.best_epoch,
        "best_dev_f1": run.record.summary.best_dev_f1,
    });
    save_checkpoint(&run.model, &meta, dir.join(CHECKPOINT_FILE))?;
    run.record.write_jsonl(dir.join(RECORD_FILE))
}
