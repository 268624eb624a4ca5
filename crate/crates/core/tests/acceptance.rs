//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if a criterion fails outside the known toy-scale gap.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use contrastive_workbench::adversarial::{
    embedding_perturbation, normalized_step, token_perturbation, FgsmSign,
};
use contrastive_workbench::autodiff::{backward, Tensor};
use contrastive_workbench::encoder::{Model, ModelConfig, Vocabulary};
use contrastive_workbench::objectives::{
    cross_entropy_from_logits, infonce, infonce_terms, lcl_loss, ntxent, ntxent_terms, ContrastBatch,
    InfoNceAnchors, Method, ObjectiveConfig,
};
use contrastive_workbench::trainer::{
    batch_size_sweep, data_efficiency_sweep, objective_step, train, RunRecord, TrainConfig,
};
use contrastive_workbench::workbench::{macro_f1, synth_corpus, Dataset};

struct Verdict {
    pass: bool,
    detail: String,
    /// Failure that is a documented limitation of the toy scale.
    tolerated: bool,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
            tolerated: false,
        }
    }
}

fn main() {
    let criteria: [(&str, &str, Duration, fn() -> Verdict); 9] = [
        ("1", "gradient oracle", Duration::from_secs(60), gradient_oracle),
        ("2", "loss oracles", Duration::from_secs(10), loss_oracles),
        ("3", "closed-form anchors", Duration::MAX, closed_forms),
        ("4", "FGSM contracts", Duration::MAX, fgsm_contracts),
        ("5", "overfit sanity", Duration::from_secs(120), overfit),
        ("6", "toy-scale trends", Duration::from_secs(900), trends),
        ("7", "embedding geometry", Duration::MAX, geometry),
        ("8", "protocol fidelity", Duration::MAX, protocol),
        ("9", "macro-F1 oracle", Duration::MAX, macro_f1_oracle),
    ];
    let mut hard_failures = 0;
    for (id, name, budget, run) in criteria {
        let started = Instant::now();
        let mut v = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|_| Verdict::new(false, "panicked"));
        let took = started.elapsed();
        if took > budget {
            v.pass = false;
            v.tolerated = false;
            v.detail = format!("{}; over the {:?} budget", v.detail, budget);
        }
        let tag = if v.pass { "PASS" } else { "FAIL" };
        let note = if !v.pass && v.tolerated { " [known toy-scale gap]" } else { "" };
        println!("{tag} {id} {name} ({:.1}s): {}{note}", took.as_secs_f64(), v.detail);
        if !v.pass && !v.tolerated {
            hard_failures += 1;
        }
    }
    if hard_failures > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- 1

fn fd_model(method: Method) -> (Model, Vec<Vec<usize>>, Vec<usize>) {
    let vocab = Vocabulary::build(["red green blue cyan pink gold grey teal"], 100);
    let mut cfg = ModelConfig::new(vocab.len(), 2);
    cfg.encoder.hidden = 16;
    cfg.encoder.heads = 2;
    cfg.encoder.ffn = 32;
    cfg.encoder.layers = 1;
    cfg.encoder.max_len = 8;
    cfg.projection_dim = 8;
    if method.needs_weighting_net() {
        cfg = cfg.with_weighting(8);
    }
    let model = Model::new(cfg, vocab, vec!["a".into(), "b".into()], 11).unwrap();
    let ids = model
        .tokenize_batch(&["red green blue", "cyan pink", "gold grey teal red", "blue teal"])
        .unwrap();
    (model, ids, vec![0, 1, 1, 0])
}

/// Largest relative error between autodiff and central differences over
/// every parameter coordinate, with dropout masks and perturbations held
/// fixed.
fn fd_max_error(method: Method) -> (f64, String) {
    const H: f64 = 1e-5;
    const FLOOR: f64 = 1e-5;
    let (model, ids, labels) = fd_model(method);
    let objective = ObjectiveConfig::new(method);
    let rng = || ChaCha8Rng::seed_from_u64(77);
    let live = objective_step(&model, &ids, &labels, &objective, Some(&mut rng()), None).unwrap();
    let frozen = live.perturbations.clone();
    let params = model.named_parameters();
    for (_, p) in &params {
        p.zero_grad();
    }
    backward(&live.total).unwrap();
    let loss = |f: &_| {
        objective_step(&model, &ids, &labels, &objective, Some(&mut rng()), Some(f))
            .unwrap()
            .components
            .total
    };
    let mut worst = (0.0, String::new());
    for (name, p) in &params {
        let grad = p.grad();
        let base = p.to_vec();
        let mut probe = base.clone();
        for k in 0..base.len() {
            probe[k] = base[k] + H;
            p.set_values(&probe).unwrap();
            let up = loss(&frozen);
            probe[k] = base[k] - H;
            p.set_values(&probe).unwrap();
            let down = loss(&frozen);
            probe[k] = base[k];
            let numeric = (up - down) / (2.0 * H);
            let rel = (numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(FLOOR);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{k}]"));
            }
        }
        p.set_values(&base).unwrap();
    }
    worst
}

fn gradient_oracle() -> Verdict {
    let results: Vec<(Method, (f64, String))> = std::thread::scope(|s| {
        let handles: Vec<_> = Method::ALL
            .iter()
            .map(|&m| s.spawn(move || (m, fd_max_error(m))))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let pass = results.iter().all(|(_, (e, _))| *e < 1e-4);
    let detail = results
        .iter()
        .map(|(m, (e, at))| format!("{m} {e:.1e} at {at}"))
        .collect::<Vec<_>>()
        .join(", ");
    Verdict::new(pass, format!("max rel. err. {detail}"))
}

// ---------------------------------------------------------------- 2

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for k in 0..a.len() {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    dot / (na.sqrt() * nb.sqrt())
}

fn brute_ntxent(z: &[Vec<f64>], y: &[usize], tau: f64) -> f64 {
    let n = z.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut denom = 0.0;
        for k in 0..n {
            if k != i {
                denom += (cos(&z[i], &z[k]) / tau).exp();
            }
        }
        let pos: Vec<usize> = (0..n).filter(|&p| p != i && y[p] == y[i]).collect();
        for &p in &pos {
            let num = (cos(&z[i], &z[p]) / tau).exp();
            total -= (num / denom).ln() / pos.len() as f64;
        }
    }
    total
}

fn brute_infonce(z: &[Vec<f64>], tau: f64) -> f64 {
    let n = z.len();
    let half = n / 2;
    let mut total = 0.0;
    for i in 0..n {
        let j = (i + half) % n;
        let mut denom = 0.0;
        for k in 0..n {
            if k != i {
                denom += (cos(&z[i], &z[k]) / tau).exp();
            }
        }
        total -= ((cos(&z[i], &z[j]) / tau).exp() / denom).ln();
    }
    total / n as f64
}

fn brute_lcl(z: &[Vec<f64>], y: &[usize], w: &[Vec<f64>], tau: f64) -> f64 {
    let n = z.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut denom = 0.0;
        for k in 0..n {
            if k != i {
                denom += w[i][y[k]] * (cos(&z[i], &z[k]) / tau).exp();
            }
        }
        let pos: Vec<usize> = (0..n).filter(|&p| p != i && y[p] == y[i]).collect();
        for &p in &pos {
            let num = w[i][y[i]] * (cos(&z[i], &z[p]) / tau).exp();
            total -= (num / denom).ln() / pos.len() as f64;
        }
    }
    total
}

fn random_batch(rng: &mut ChaCha8Rng, classes: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let n = rng.random_range(1..=4);
    let dim = rng.random_range(2..=6);
    let z: Vec<Vec<f64>> = (0..2 * n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let half: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let y = half.iter().chain(&half).copied().collect();
    (z, y)
}

fn loss_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let classes = 3;
        let (z, y) = random_batch(&mut rng, classes);
        let tau = rng.random_range(0.1..1.0);
        let reps = Tensor::from_rows(&z).unwrap();
        let cb = ContrastBatch::new(reps.clone(), y.clone()).unwrap();
        let w: Vec<Vec<f64>> = (0..z.len())
            .map(|_| {
                let raw: Vec<f64> = (0..classes).map(|_| rng.random_range(0.05..1.0)).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            })
            .collect();
        let wt = Tensor::from_rows(&w).unwrap();
        worst = worst
            .max((ntxent(&cb, tau).unwrap().item() - brute_ntxent(&z, &y, tau)).abs())
            .max((infonce(&reps, tau, InfoNceAnchors::Both).unwrap().item() - brute_infonce(&z, tau)).abs())
            .max((lcl_loss(&cb, &wt, tau).unwrap().item() - brute_lcl(&z, &y, &w, tau)).abs());
    }
    Verdict::new(worst < 1e-6, format!("20 batches, max abs. diff {worst:.1e}"))
}

// ---------------------------------------------------------------- 3

fn closed_forms() -> Verdict {
    let same = Tensor::from_rows(&vec![vec![0.3, -1.2, 0.5]; 4]).unwrap();
    let mut worst: f64 = 0.0;
    for labels in [vec![0, 1, 0, 1], vec![2, 2, 2, 2]] {
        let cb = ContrastBatch::new(same.clone(), labels).unwrap();
        for t in ntxent_terms(&cb, 0.3).unwrap().to_vec() {
            worst = worst.max((t - 3f64.ln()).abs());
        }
    }
    for t in infonce_terms(&same, 0.3, InfoNceAnchors::Both).unwrap().to_vec() {
        worst = worst.max((t - 3f64.ln()).abs());
    }
    let anchors_ok = worst < 1e-6;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut uniform_ok = true;
    for _ in 0..10 {
        let (z, y) = random_batch(&mut rng, 3);
        let cb = ContrastBatch::new(Tensor::from_rows(&z).unwrap(), y).unwrap();
        let w = Tensor::from_rows(&vec![vec![1.0 / 3.0; 3]; z.len()]).unwrap();
        uniform_ok &= lcl_loss(&cb, &w, 0.3).unwrap().item() == ntxent(&cb, 0.3).unwrap().item();
    }

    let data = synth_corpus(3, 90, 4, 0.3).unwrap();
    let vocab = Vocabulary::build(data.train.texts(), 100);
    let cfg = TrainConfig::toy(Method::Scl).model_config(vocab.len(), 3);
    let model = Model::new(cfg, vocab, data.classes().to_vec(), 5).unwrap();
    let ids = model.tokenize_batch(&data.train.texts()[..8]).unwrap();
    let labels = &data.train.labels()[..8];
    let mut scl = ObjectiveConfig::new(Method::Scl);
    scl.lambda = 0.0;
    let a = objective_step(&model, &ids, labels, &scl, Some(&mut ChaCha8Rng::seed_from_u64(1)), None).unwrap();
    let ce = ObjectiveConfig::new(Method::Ce);
    let b = objective_step(&model, &ids, labels, &ce, Some(&mut ChaCha8Rng::seed_from_u64(1)), None).unwrap();
    let lambda_ok = a.components.total == b.components.total;

    Verdict::new(
        anchors_ok && uniform_ok && lambda_ok,
        format!(
            "ln 3 max dev. {worst:.1e}; uniform LCL == NTXent: {uniform_ok}; λ=0 SCL == CE: {lambda_ok}"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn fgsm_contracts() -> Verdict {
    let eps = 0.01;
    let (r, _) = normalized_step(&[3.0, 4.0], eps, FgsmSign::AsPrinted);
    let worked = (r[0] + 0.006).abs() < 1e-15 && (r[1] + 0.008).abs() < 1e-15;

    let (model, ids, labels) = fd_model(Method::Cat);
    let mut norm_dev: f64 = 0.0;
    for sign in [FgsmSign::AsPrinted, FgsmSign::Ascent] {
        let h = model.pooled(&ids, None).unwrap();
        let loss = cross_entropy_from_logits(&model.main.classifier.logits(&h).unwrap(), &labels).unwrap();
        let e = embedding_perturbation(&loss, model.main.encoder.embedding(), eps, sign).unwrap();
        let n = e.offset().to_vec().iter().map(|v| v * v).sum::<f64>().sqrt();
        norm_dev = norm_dev.max((n - eps).abs() / eps);
        let t = token_perturbation(&loss, &h, eps, sign).unwrap();
        for row in t.offset().to_rows() {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            norm_dev = norm_dev.max((n - eps).abs() / eps);
        }
    }
    let norms_ok = norm_dev < 1e-6;

    let before: Vec<u64> = model.main.encoder.embedding().to_vec().iter().map(|v| v.to_bits()).collect();
    let out = objective_step(
        &model,
        &ids,
        &labels,
        &ObjectiveConfig::new(Method::Cat),
        Some(&mut ChaCha8Rng::seed_from_u64(0)),
        None,
    )
    .unwrap();
    let after: Vec<u64> = model.main.encoder.embedding().to_vec().iter().map(|v| v.to_bits()).collect();
    let restored = before == after && out.components.ce_perturbed.is_some();

    Verdict::new(
        worked && norms_ok && restored,
        format!(
            "(3,4) -> {r:?}; max |‖r‖-ε|/ε {norm_dev:.1e}; V bitwise unchanged after CAT pass: {restored}"
        ),
    )
}

// ---------------------------------------------------------------- 5

fn overfit_config(method: Method) -> TrainConfig {
    let mut c = TrainConfig::toy(method);
    c.batch_size = 4;
    c.learning_rate = 5e-3;
    c.patience = c.max_epochs;
    c.track_train_accuracy = true;
    c
}

fn overfit() -> Verdict {
    let data = synth_corpus(2, 20, 9, 0.0).unwrap();
    assert_eq!(data.train.len(), 16);
    let mut parts = Vec::new();
    let mut pass = true;
    for method in Method::ALL {
        let run = train(&overfit_config(method), &data).unwrap();
        let first = run
            .record
            .epochs
            .iter()
            .find(|e| e.train_accuracy == Some(1.0))
            .map(|e| e.epoch);
        pass &= first.is_some();
        parts.push(format!("{method}@{}", first.map_or("never".into(), |e| e.to_string())));
    }
    Verdict::new(pass, format!("first epoch at train acc. 1.0: {}", parts.join(" ")))
}

// ---------------------------------------------------------------- 6 and 7

fn trend_data() -> Dataset {
    synth_corpus(3, 600, 1, 0.6).unwrap()
}

fn trend_config() -> TrainConfig {
    TrainConfig::toy(Method::Ce)
}

fn trends() -> Verdict {
    let data = trend_data();
    let cfg = trend_config();
    let grid = data_efficiency_sweep(&cfg, &data, &[Method::Ce, Method::Scl], &[0.5, 1.0]).unwrap();
    let (ce, scl) = (grid.score(Method::Ce, 0.5).unwrap(), grid.score(Method::Scl, 0.5).unwrap());
    let ce_full = grid.score(Method::Ce, 1.0).unwrap();
    let a = scl >= ce;

    let series = batch_size_sweep(&cfg, &data, &Method::ALL, &[4, 8, 16]).unwrap();
    let rising: Vec<Method> = Method::ALL
        .into_iter()
        .filter(|&m| series.dev_series(m).unwrap().windows(2).all(|w| w[1] >= w[0]))
        .collect();
    let b = rising.len() >= 4;
    let spread: Vec<String> = Method::ALL
        .iter()
        .map(|&m| {
            let s = series.dev_series(m).unwrap();
            format!("{m} {}", s.iter().map(|v| format!("{:.3}", v)).collect::<Vec<_>>().join("/"))
        })
        .collect();
    Verdict {
        pass: a && b,
        detail: format!(
            "(a) SCL@50% {:.2} vs CE@50% {:.2}: {a} (CE@100% {:.2}); (b) {}/6 non-decreasing over 4/8/16 [{}]: {b}",
            scl * 100.0,
            ce * 100.0,
            ce_full * 100.0,
            rising.len(),
            spread.join(", ")
        ),
        tolerated: a && !b,
    }
}

fn cosine_gap(model: &Model, data: &Dataset) -> f64 {
    let ids = model.tokenize_batch(&data.dev.texts()).unwrap();
    let h = model.pooled(&ids, None).unwrap().to_rows();
    let y = data.dev.labels();
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..h.len() {
        for j in i + 1..h.len() {
            let c = cos(&h[i], &h[j]);
            if y[i] == y[j] {
                intra += c;
                ni += 1;
            } else {
                inter += c;
                nx += 1;
            }
        }
    }
    intra / ni as f64 - inter / nx as f64
}

fn geometry() -> Verdict {
    let data = trend_data();
    let mut cfg = trend_config();
    let ce = cosine_gap(&train(&cfg, &data).unwrap().model, &data);
    cfg.objective = ObjectiveConfig::new(Method::Scl);
    let scl = cosine_gap(&train(&cfg, &data).unwrap().model, &data);
    Verdict::new(scl > ce, format!("intra-minus-inter cosine gap SCL {scl:.4} vs CE {ce:.4}"))
}

// ---------------------------------------------------------------- 8

fn protocol() -> Verdict {
    let data = synth_corpus(3, 150, 2, 0.5).unwrap();

    let mut frozen = TrainConfig::toy(Method::Scl);
    frozen.learning_rate = 0.0;
    let flat = train(&frozen, &data).unwrap().record.summary;
    let stop_ok = flat.stopped_early && flat.best_epoch == 1 && flat.epochs_run == 1 + frozen.patience;

    let cfg = TrainConfig::toy(Method::Tlcl);
    let run = train(&cfg, &data).unwrap();
    let s = &run.record.summary;
    let staleness_ok = !s.stopped_early || s.epochs_run - s.best_epoch == cfg.patience;
    let dev_ids = run.model.tokenize_batch(&data.dev.texts()).unwrap();
    let dev = macro_f1(&data.dev.labels(), &run.model.predict(&dev_ids).unwrap(), 3).unwrap();
    let test_ids = run.model.tokenize_batch(&data.test.texts()).unwrap();
    let test = macro_f1(&data.test.labels(), &run.model.predict(&test_ids).unwrap(), 3).unwrap();
    let best_ok = dev.macro_f1 == s.best_dev_f1 && Some(&test) == s.test.as_ref();

    let again: RunRecord = train(&cfg, &data).unwrap().record;
    let diff = run.record.max_outcome_difference(&again);
    let rerun_ok = diff.is_some_and(|d| d <= 1e-6);

    Verdict::new(
        stop_ok && staleness_ok && best_ok && rerun_ok,
        format!(
            "flat run stopped after epoch {} (best {}); TLCL best epoch {} of {}; restored dev/test match: {best_ok}; rerun diff {diff:?}",
            flat.epochs_run, flat.best_epoch, s.best_epoch, s.epochs_run
        ),
    )
}

// ---------------------------------------------------------------- 9

fn macro_f1_oracle() -> Verdict {
    let mut hand_err: f64 = 0.0;
    let cases: [(&[usize], &[usize], usize, f64); 4] = [
        (&[1, 1, 0, 0], &[1, 0, 0, 0], 2, 0.733_333_333_333_333_3),
        (&[0, 0, 1, 1, 2, 2], &[0, 1, 1, 1, 2, 0], 3, (0.5 + 0.8 + 2.0 / 3.0) / 3.0),
        (&[0, 1, 2, 0], &[0, 0, 0, 0], 3, (2.0 * 0.5 / 1.5) / 3.0),
        (&[0, 1, 2], &[0, 1, 2], 3, 1.0),
    ];
    for (gold, pred, k, want) in cases {
        hand_err = hand_err.max((macro_f1(gold, pred, k).unwrap().macro_f1 - want).abs());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut invariance_err: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(2..6);
        let n = rng.random_range(1..40);
        let gold: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let base = macro_f1(&gold, &pred, k).unwrap().macro_f1;

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let g2: Vec<usize> = order.iter().map(|&i| gold[i]).collect();
        let p2: Vec<usize> = order.iter().map(|&i| pred[i]).collect();
        invariance_err = invariance_err.max((macro_f1(&g2, &p2, k).unwrap().macro_f1 - base).abs());

        let mut relabel: Vec<usize> = (0..k).collect();
        relabel.shuffle(&mut rng);
        let g3: Vec<usize> = gold.iter().map(|&c| relabel[c]).collect();
        let p3: Vec<usize> = pred.iter().map(|&c| relabel[c]).collect();
        invariance_err = invariance_err.max((macro_f1(&g3, &p3, k).unwrap().macro_f1 - base).abs());
    }
    Verdict::new(
        hand_err < 1e-9 && invariance_err < 1e-12,
        format!("hand cases max err {hand_err:.1e}; 100 permuted/relabelled cases max err {invariance_err:.1e}"),
    )
}
