//! Adversarial views: one global step on the embedding matrix and one
//! step per example on pooled representations.

use contrastive_workbench::adversarial::{fgsm_embedding, fgsm_token, normalized_step, FgsmSign, TokenTarget};
use contrastive_workbench::encoder::{Model, ModelConfig, Vocabulary};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (r, _) = normalized_step(&[3.0, 4.0], 0.01, FgsmSign::AsPrinted);
    println!("gradient (3, 4), eps 0.01 -> r = {r:?}");

    let texts = ["the cat sat", "a dog ran far", "the dog sat", "a cat ran"];
    let vocab = Vocabulary::build(texts, 100);
    let mut cfg = ModelConfig::new(vocab.len(), 2);
    cfg.encoder.hidden = 16;
    cfg.encoder.heads = 2;
    cfg.encoder.layers = 1;
    cfg.encoder.ffn = 32;
    cfg.encoder.max_len = 8;
    let model = Model::new(cfg, vocab, vec!["pet".into(), "other".into()], 3)?;
    let ids = model.tokenize_batch(&texts)?;
    let labels = [0, 1, 1, 0];
    let eps = 0.05;

    let before = model.main.encoder.embedding().to_vec();
    for sign in [FgsmSign::AsPrinted, FgsmSign::Ascent] {
        let v = fgsm_embedding(&model, &ids, &labels, eps, sign, None)?;
        let ce_clean = v.clean_loss.item();
        let logits = model.main.classifier.logits(&v.perturbed)?;
        let ce_view = contrastive_workbench::objectives::cross_entropy_from_logits(&logits, &labels)?.item();
        println!(
            "embedding {sign:?}: |r| = {:.6}, CE clean {ce_clean:.6} -> view {ce_view:.6}",
            norm(&v.perturbation.offset().to_vec())
        );
    }
    assert_eq!(before, model.main.encoder.embedding().to_vec());
    println!("embedding matrix unchanged");

    for target in [TokenTarget::Pooled, TokenTarget::InputTokens] {
        let v = fgsm_token(&model, &ids, &labels, eps, FgsmSign::Ascent, target, None)?;
        let shift: Vec<f64> = v
            .perturbed
            .to_rows()
            .iter()
            .zip(v.clean.to_rows())
            .map(|(p, c)| norm(&p.iter().zip(&c).map(|(a, b)| a - b).collect::<Vec<_>>()))
            .collect();
        println!("token {target:?}: per-example |h' - h| = {shift:.4?}");
    }
    Ok(())
}
