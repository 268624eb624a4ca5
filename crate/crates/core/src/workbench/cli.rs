//! `clwb` command line: synthetic data, training, evaluation, sweeps,
//! projection and comparison grids.
//!
//! Exit status 0 on success, 1 on usage errors, 2 on runtime failures.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use super::{ingest, macro_f1, project_2d, synth_corpus, Dataset, Split};
use crate::adversarial::{FgsmSign, TokenTarget};
use crate::encoder::load_checkpoint;
use crate::objectives::{InfoNceAnchors, Method, Reduction, WeightingView};
use crate::trainer::{
    batch_size_sweep, data_efficiency_sweep, save_run, train, RunRecord, TrainConfig,
};

pub const OUT_ENV: &str = "CLWB_OUT";

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Parser)]
#[command(name = "clwb", version, about = "Supervised contrastive learning workbench")]
pub struct Cli {
    /// Log at debug level.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic train/dev/test corpus.
    Synth(SynthArgs),
    /// Train one model and save its checkpoint and run record.
    Train(TrainArgs),
    /// Score a checkpoint on a labeled TSV file.
    Eval(EvalArgs),
    /// Train on nested fractions of the train split.
    SweepData(SweepDataArgs),
    /// Train at several batch sizes.
    SweepBatch(SweepBatchArgs),
    /// Write 2-D PCA coordinates of [CLS] representations.
    Project(ProjectArgs),
    /// Tabulate test macro-F1 from run records, tasks by methods.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output directory.
    #[arg(long, env = OUT_ENV, default_value = "clwb-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 600)]
    size: usize,
    /// 0 gives disjoint class vocabularies, 1 identical distributions.
    #[arg(long, default_value_t = 0.5)]
    difficulty: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
struct Hyper {
    /// Directory holding train.tsv, dev.tsv and test.tsv.
    #[arg(long)]
    data: PathBuf,
    /// Task name for records; defaults to the data directory name.
    #[arg(long)]
    task: Option<String>,
    #[arg(long, default_value_t = TrainConfig::DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    #[arg(long = "lr", default_value_t = TrainConfig::DEFAULT_LEARNING_RATE)]
    learning_rate: f64,
    #[arg(long, default_value_t = TrainConfig::DEFAULT_MAX_EPOCHS)]
    max_epochs: usize,
    #[arg(long, default_value_t = TrainConfig::DEFAULT_PATIENCE)]
    patience: usize,
    #[arg(long, default_value_t = TrainConfig::DEFAULT_MAX_SEQ_LEN)]
    max_seq_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "lambda", default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 0.3)]
    tau: f64,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, default_value_t = 50_000)]
    train_cap: usize,
    #[arg(long, default_value_t = 5_000)]
    dev_cap: usize,
    #[arg(long, default_value_t = 5_000)]
    test_cap: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 128)]
    ffn: usize,
    #[arg(long, default_value_t = 64)]
    projection_dim: usize,
    #[arg(long, default_value_t = 0.9)]
    keep_prob: f64,
    #[arg(long, default_value_t = 32)]
    weighting_hidden: usize,
    #[arg(long, default_value_t = 20_000)]
    vocab_cap: usize,
    #[arg(long, value_enum, default_value = "as-printed")]
    fgsm_sign: FgsmSign,
    #[arg(long, value_enum, default_value = "pooled")]
    token_target: TokenTarget,
    #[arg(long, value_enum, default_value = "both")]
    infonce_anchors: InfoNceAnchors,
    #[arg(long, value_enum, default_value = "clean")]
    weighting_view: WeightingView,
    #[arg(long, value_enum, default_value = "mean")]
    reduction: Reduction,
    /// Use the projection head for SCL and LCL as well.
    #[arg(long)]
    project_all: bool,
    /// Class-mixed batch order instead of uniform shuffling.
    #[arg(long)]
    balanced_batches: bool,
    #[command(flatten)]
    out: OutArg,
}

impl Hyper {
    fn config(&self, method: Method) -> TrainConfig {
        let mut c = TrainConfig::new(method);
        c.task = self.task.clone().unwrap_or_else(|| {
            self.data
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "task".into())
        });
        c.batch_size = self.batch_size;
        c.learning_rate = self.learning_rate;
        c.max_epochs = self.max_epochs;
        c.patience = self.patience;
        c.max_seq_len = self.max_seq_len;
        c.seed = self.seed;
        c.objective.lambda = self.lambda;
        c.objective.tau = self.tau;
        c.objective.epsilon = self.epsilon;
        c.objective.options.fgsm_sign = self.fgsm_sign;
        c.objective.options.token_target = self.token_target;
        c.objective.options.infonce_anchors = self.infonce_anchors;
        c.objective.options.weighting_view = self.weighting_view;
        c.objective.options.reduction = self.reduction;
        c.objective.options.project_all = self.project_all;
        c.caps.train = self.train_cap;
        c.caps.dev = self.dev_cap;
        c.caps.test = self.test_cap;
        c.model.hidden = self.hidden;
        c.model.layers = self.layers;
        c.model.heads = self.heads;
        c.model.ffn = self.ffn;
        c.model.projection_dim = self.projection_dim;
        c.model.keep_prob = self.keep_prob;
        c.model.weighting_hidden = self.weighting_hidden;
        c.model.vocab_cap = self.vocab_cap;
        c.balanced_batches = self.balanced_batches;
        c
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// One of ce, scl, cat, tact, lcl, tlcl.
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Share of the train split to use.
    #[arg(long, default_value_t = 1.0)]
    fraction: f64,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Debug, Args)]
struct SweepDataArgs {
    #[arg(long, value_parser = parse_method, value_delimiter = ',', default_value = "ce,scl,cat,tact,lcl,tlcl")]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,1.0")]
    fractions: Vec<f64>,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Debug, Args)]
struct SweepBatchArgs {
    #[arg(long, value_parser = parse_method, value_delimiter = ',', default_value = "ce,scl,cat,tact,lcl,tlcl")]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
    sizes: Vec<usize>,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Labeled TSV file to score.
    #[arg(long)]
    data: PathBuf,
    /// Also write metrics.json here.
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Labeled TSV file whose examples are projected.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Run-record files, or directories searched recursively for *.jsonl.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Also write compare.tsv here.
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = if cli.verbose { "debug" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), BoxError> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()).into())
}

fn write_file(path: &Path, content: &str) -> Result<(), BoxError> {
    fs::write(path, content).map_err(|e| format!("{}: {e}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn execute(command: Command) -> Result<(), BoxError> {
    match command {
        Command::Synth(a) => {
            let data = synth_corpus(a.classes, a.size, a.seed, a.difficulty)?;
            data.write_dir(&a.out.out)?;
            println!(
                "{} train / {} dev / {} test examples in {}",
                data.train.len(),
                data.dev.len(),
                data.test.len(),
                a.out.out.display()
            );
        }
        Command::Train(a) => {
            let data = Dataset::load_dir(&a.hyper.data)?;
            let mut cfg = a.hyper.config(a.method);
            cfg.data_fraction = a.fraction;
            let run = train(&cfg, &data)?;
            save_run(&run, &a.hyper.out.out)?;
            let s = &run.record.summary;
            println!(
                "{} {}: best epoch {} dev macro-F1 {:.4} test macro-F1 {:.4}",
                s.config.task,
                cfg.method(),
                s.best_epoch,
                s.best_dev_f1,
                run.record.test_macro_f1().unwrap_or(f64::NAN)
            );
        }
        Command::Eval(a) => {
            let (model, _) = load_checkpoint(&a.checkpoint)?;
            let corpus = ingest(&a.data, Split::Test)?.corpus.with_catalog(&model.labels);
            if corpus.classes().len() > model.labels.len() {
                return Err(format!(
                    "{} has classes unknown to the checkpoint: {:?}",
                    a.data.display(),
                    &corpus.classes()[model.labels.len()..]
                )
                .into());
            }
            let ids = model.tokenize_batch(&corpus.texts())?;
            let report = macro_f1(&corpus.labels(), &model.predict(&ids)?, model.classes())?;
            println!("macro-F1 {:.4} accuracy {:.4}", report.macro_f1, report.accuracy);
            for (c, name) in model.labels.iter().enumerate() {
                println!(
                    "  {name}: P {:.4} R {:.4} F1 {:.4} support {}",
                    report.precision[c], report.recall[c], report.f1[c], report.support[c]
                );
            }
            if let Some(dir) = a.out {
                create_dir(&dir)?;
                write_file(&dir.join("metrics.json"), &serde_json::to_string_pretty(&report)?)?;
            }
        }
        Command::SweepData(a) => {
            let data = Dataset::load_dir(&a.hyper.data)?;
            let cfg = a.hyper.config(a.methods[0]);
            let grid = data_efficiency_sweep(&cfg, &data, &a.methods, &a.fractions)?;
            let out = &a.hyper.out.out;
            create_dir(&out.join("runs"))?;
            for (m, row) in grid.methods.iter().zip(&grid.records) {
                for (f, r) in grid.fractions.iter().zip(row) {
                    r.write_jsonl(out.join("runs").join(format!("{}_{}.jsonl", m.name(), f)))?;
                }
            }
            let tsv = grid.to_tsv();
            write_file(&out.join("data_efficiency.tsv"), &tsv)?;
            print!("{tsv}");
        }
        Command::SweepBatch(a) => {
            let data = Dataset::load_dir(&a.hyper.data)?;
            let cfg = a.hyper.config(a.methods[0]);
            let series = batch_size_sweep(&cfg, &data, &a.methods, &a.sizes)?;
            let out = &a.hyper.out.out;
            create_dir(&out.join("runs"))?;
            for (m, row) in series.methods.iter().zip(&series.records) {
                for (s, r) in series.sizes.iter().zip(row) {
                    r.write_jsonl(out.join("runs").join(format!("{}_bs{}.jsonl", m.name(), s)))?;
                }
            }
            let tsv = series.to_tsv();
            write_file(&out.join("batch_size.tsv"), &tsv)?;
            print!("{tsv}");
        }
        Command::Project(a) => {
            let (model, _) = load_checkpoint(&a.checkpoint)?;
            let corpus = ingest(&a.data, Split::Dev)?.corpus;
            let ids = model.tokenize_batch(&corpus.texts())?;
            let mut rows = Vec::with_capacity(ids.len());
            for chunk in ids.chunks(64) {
                rows.extend(model.pooled(chunk, None)?.to_rows());
            }
            let projection = project_2d(&rows, &corpus.labels())?;
            create_dir(&a.out.out)?;
            write_file(&a.out.out.join("projection.csv"), &projection.to_csv(corpus.classes())?)?;
        }
        Command::Compare(a) => {
            let mut records = Vec::new();
            for path in &a.runs {
                collect_records(path, &mut records)?;
            }
            let tsv = compare_grid(&records);
            if let Some(dir) = a.out {
                create_dir(&dir)?;
                write_file(&dir.join("compare.tsv"), &tsv)?;
            }
            print!("{tsv}");
        }
    }
    Ok(())
}

fn collect_records(path: &Path, out: &mut Vec<RunRecord>) -> Result<(), BoxError> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        entries.sort();
        for p in entries {
            if p.is_dir() || p.extension().is_some_and(|x| x == "jsonl") {
                collect_records(&p, out)?;
            }
        }
    } else {
        out.push(RunRecord::read_jsonl(path).map_err(|e| format!("{}: {e}", path.display()))?);
    }
    Ok(())
}

/// Test macro-F1 (percent) with tasks as rows and methods as columns in
/// the order CE, SCL, CAT, TACT, LCL, TLCL, closed by an `Avg.` row.
/// Several records for one cell are averaged; missing cells print `-`.
pub fn compare_grid(records: &[RunRecord]) -> String {
    let mut tasks: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(usize, Method), Vec<f64>> = BTreeMap::new();
    for r in records {
        let Some(f1) = r.test_macro_f1() else { continue };
        let task = &r.summary.config.task;
        let t = match tasks.iter().position(|x| x == task) {
            Some(t) => t,
            None => {
                tasks.push(task.clone());
                tasks.len() - 1
            }
        };
        cells.entry((t, r.config().method())).or_default().push(f1 * 100.0);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut out = String::from("task");
    for m in Method::ALL {
        write!(out, "\t{}", m.label()).unwrap();
    }
    out.push('\n');
    for (t, task) in tasks.iter().enumerate() {
        out.push_str(task);
        for m in Method::ALL {
            match cells.get(&(t, m)) {
                Some(v) => write!(out, "\t{:.2}", mean(v)).unwrap(),
                None => out.push_str("\t-"),
            }
        }
        out.push('\n');
    }
    out.push_str("Avg.");
    for m in Method::ALL {
        let per_task: Vec<f64> = (0..tasks.len())
            .filter_map(|t| cells.get(&(t, m)).map(|v| mean(v)))
            .collect();
        if per_task.is_empty() {
            out.push_str("\t-");
        } else {
            write!(out, "\t{:.2}", mean(&per_task)).unwrap();
        }
    }
    out.push('\n');
    out
}
