use std::path::Path;
use std::process::{Command, Output};

use contrastive_workbench::objectives::Method;
use contrastive_workbench::trainer::{train, RunRecord, TrainConfig};
use contrastive_workbench::workbench::cli::compare_grid;
use contrastive_workbench::workbench::synth_corpus;

fn clwb(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clwb"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CLWB_OUT")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &[&str] = &[
    "--hidden", "8", "--layers", "1", "--heads", "2", "--ffn", "16", "--projection-dim", "8",
    "--weighting-hidden", "4", "--max-seq-len", "12", "--max-epochs", "2", "--patience", "1",
    "--lr", "3e-3", "--batch-size", "8",
];

#[test]
fn unknown_method_exits_1_with_the_method_list() {
    let dir = tempfile::tempdir().unwrap();
    let o = clwb(&["train", "--method", "xyz", "--data", "."], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ce, scl, cat, tact, lcl, tlcl"), "{}", stderr(&o));
}

#[test]
fn missing_data_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = clwb(&["train", "--method", "ce", "--data", "nowhere"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error: "));
}

#[test]
fn help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let o = clwb(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    for sub in ["synth", "train", "eval", "sweep-data", "sweep-batch", "project", "compare"] {
        assert!(stdout(&o).contains(sub), "{sub}");
    }
}

#[test]
fn synth_train_eval_project_compare() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = clwb(&["synth", "--classes", "3", "--size", "150", "--difficulty", "0.3", "--out", "data"], p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["train.tsv", "dev.tsv", "test.tsv"] {
        assert!(p.join("data").join(f).is_file());
    }

    for method in ["ce", "tlcl"] {
        let out = format!("runs/{method}");
        let mut args = vec!["train", "--method", method, "--data", "data", "--task", "toy", "--out", &out];
        args.extend_from_slice(TINY);
        let o = clwb(&args, p);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(p.join(&out).join("checkpoint.clwb").is_file());
        let record = RunRecord::read_jsonl(p.join(&out).join("run.jsonl")).unwrap();
        assert_eq!(record.config().batch_size, 8);
        assert_eq!(record.config().model.hidden, 8);
    }

    let o = clwb(&["eval", "--checkpoint", "runs/ce/checkpoint.clwb", "--data", "data/test.tsv", "--out", "eval"], p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("eval/metrics.json")).unwrap()).unwrap();
    assert!(metrics["macro_f1"].as_f64().unwrap() >= 0.0);

    let o = clwb(&["project", "--checkpoint", "runs/tlcl/checkpoint.clwb", "--data", "data/dev.tsv", "--out", "proj"], p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(p.join("proj/projection.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x,y,label_name"));
    assert_eq!(csv.lines().count(), 1 + 15);

    let o = clwb(&["compare", "runs", "--out", "cmp"], p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let grid = std::fs::read_to_string(p.join("cmp/compare.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = grid.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows[0], ["task", "CE", "SCL", "CAT", "TACT", "LCL", "TLCL"]);
    assert_eq!(rows[1][0], "toy");
    assert_eq!(rows[1][2], "-");
    assert_eq!(rows[2][0], "Avg.");
}

#[test]
fn compare_renders_six_by_three_with_average_row() {
    let data = synth_corpus(3, 60, 0, 0.3).unwrap();
    let mut base = TrainConfig::toy(Method::Ce);
    base.max_epochs = 1;
    base.patience = 1;
    let template = train(&base, &data).unwrap().record;
    let mut records = Vec::new();
    for (t, task) in ["emotion", "irony", "sarcasm"].iter().enumerate() {
        for (m, method) in Method::ALL.iter().enumerate() {
            let mut r = template.clone();
            r.summary.config.task = task.to_string();
            r.summary.config.objective.method = *method;
            r.summary.test.as_mut().unwrap().macro_f1 = (10 * t + m) as f64 / 100.0;
            records.push(r);
        }
    }
    let grid = compare_grid(&records);
    let rows: Vec<Vec<&str>> = grid.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 1 + 3 + 1);
    assert!(rows.iter().all(|r| r.len() == 7));
    assert_eq!(rows[2], ["irony", "10.00", "11.00", "12.00", "13.00", "14.00", "15.00"]);
    assert_eq!(rows[4], ["Avg.", "10.00", "11.00", "12.00", "13.00", "14.00", "15.00"]);
}

#[test]
fn compare_via_cli_reads_record_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_corpus(3, 60, 0, 0.3).unwrap();
    let mut cfg = TrainConfig::toy(Method::Scl);
    cfg.max_epochs = 1;
    cfg.patience = 1;
    let record = train(&cfg, &data).unwrap().record;
    record.write_jsonl(dir.path().join("a.jsonl")).unwrap();
    let o = clwb(&["compare", "a.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let f1 = format!("{:.2}", record.test_macro_f1().unwrap() * 100.0);
    assert!(out.lines().nth(1).unwrap().split('\t').nth(2) == Some(f1.as_str()), "{out}");
}
