//! Central finite differences against autodiff for a full objective,
//! with dropout masks and perturbations held fixed.
//!
//! `cargo run --example gradient_check -- tlcl`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use contrastive_workbench::autodiff::backward;
use contrastive_workbench::encoder::{Model, ModelConfig, Vocabulary};
use contrastive_workbench::objectives::{Method, ObjectiveConfig};
use contrastive_workbench::trainer::objective_step;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let method: Method = std::env::args().nth(1).as_deref().unwrap_or("scl").parse()?;
    let texts = ["red green blue", "cyan pink", "gold grey teal red", "blue teal"];
    let vocab = Vocabulary::build(texts, 100);
    let mut cfg = ModelConfig::new(vocab.len(), 2);
    cfg.encoder.hidden = 16;
    cfg.encoder.heads = 2;
    cfg.encoder.layers = 1;
    cfg.encoder.ffn = 32;
    cfg.encoder.max_len = 8;
    cfg.projection_dim = 8;
    if method.needs_weighting_net() {
        cfg = cfg.with_weighting(8);
    }
    let model = Model::new(cfg, vocab, vec!["a".into(), "b".into()], 11)?;
    let ids = model.tokenize_batch(&texts)?;
    let labels = [0, 1, 1, 0];
    let objective = ObjectiveConfig::new(method);
    let rng = || ChaCha8Rng::seed_from_u64(5);

    let live = objective_step(&model, &ids, &labels, &objective, Some(&mut rng()), None)?;
    backward(&live.total)?;
    let frozen = live.perturbations;
    let h = 1e-5;
    println!("{method}: loss {:.6}, {} parameters", live.components.total, model.parameter_count());
    for (name, p) in model.named_parameters() {
        let grad = p.grad();
        let base = p.to_vec();
        let mut worst: f64 = 0.0;
        for k in 0..base.len() {
            let mut probe = base.clone();
            let mut eval = |x: f64| -> Result<f64, Box<dyn std::error::Error>> {
                probe[k] = x;
                p.set_values(&probe)?;
                Ok(objective_step(&model, &ids, &labels, &objective, Some(&mut rng()), Some(&frozen))?
                    .components
                    .total)
            };
            let numeric = (eval(base[k] + h)? - eval(base[k] - h)?) / (2.0 * h);
            let rel = (numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(1e-5);
            worst = worst.max(rel);
        }
        p.set_values(&base)?;
        println!("  {name:<32} {:>5} values  max rel. err {worst:.2e}", base.len());
    }
    Ok(())
}
