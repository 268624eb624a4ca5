use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{backward, Shape, Tensor};

fn tiny_config(vocab: usize, classes: usize) -> ModelConfig {
    let mut cfg = ModelConfig::new(vocab, classes);
    cfg.encoder.hidden = 8;
    cfg.encoder.heads = 2;
    cfg.encoder.ffn = 16;
    cfg.encoder.layers = 2;
    cfg.encoder.max_len = 10;
    cfg.projection_dim = 8;
    cfg.with_weighting(4)
}

fn tiny_model(seed: u64) -> Model {
    let vocab = Vocabulary::build(["red green blue", "sun moon star red"], 100);
    let cfg = tiny_config(vocab.len(), 3);
    Model::new(cfg, vocab, vec!["a".into(), "b".into(), "c".into()], seed).unwrap()
}

fn batch(model: &Model) -> Vec<Vec<usize>> {
    model
        .tokenize_batch(&["red green", "sun moon star", "blue red sun", "zzz"])
        .unwrap()
}

fn bits(t: &Tensor) -> Vec<u64> {
    t.values().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn eval_encoding_is_deterministic() {
    let m = tiny_model(1);
    let b = batch(&m);
    let a = m.pooled(&b, None).unwrap();
    let c = m.pooled(&b, None).unwrap();
    assert_eq!(bits(&a), bits(&c));
}

#[test]
fn keep_prob_one_dropout_matches_eval() {
    let mut m = tiny_model(1);
    m.main.encoder = {
        let mut cfg = m.config.encoder.clone();
        cfg.keep_prob = 1.0;
        Encoder::new(cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap()
    };
    let b = batch(&m);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let on = m.pooled(&b, Some(&mut rng)).unwrap();
    let off = m.pooled(&b, None).unwrap();
    assert_eq!(bits(&on), bits(&off));
}

#[test]
fn dropout_changes_outputs() {
    let m = tiny_model(1);
    let b = batch(&m);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let on = m.pooled(&b, Some(&mut rng)).unwrap();
    let off = m.pooled(&b, None).unwrap();
    assert_ne!(bits(&on), bits(&off));
}

#[test]
fn permuting_batch_permutes_outputs() {
    let m = tiny_model(2);
    let b = batch(&m);
    let singles: Vec<Vec<u64>> = b
        .iter()
        .map(|ids| bits(&m.pooled(std::slice::from_ref(ids), None).unwrap()))
        .collect();
    let perm = [2, 0, 3, 1];
    let permuted: Vec<Vec<usize>> = perm.iter().map(|&i| b[i].clone()).collect();
    let out = m.pooled(&permuted, None).unwrap();
    for (row, &src) in perm.iter().enumerate() {
        let r: Vec<u64> = out.row(row).iter().map(|v| v.to_bits()).collect();
        assert_eq!(r, singles[src]);
    }
}

#[test]
fn trailing_padding_never_changes_cls() {
    let m = tiny_model(4);
    let mut ids = vec![CLS, m.vocab.id("red"), m.vocab.id("sun"), SEP];
    let short = m.pooled(&[ids.clone()], None).unwrap();
    ids.extend([PAD; 6]);
    let long = m.pooled(&[ids], None).unwrap();
    assert_eq!(bits(&short), bits(&long));
}

#[test]
fn out_of_range_id_is_rejected() {
    let m = tiny_model(1);
    let err = m.pooled(&[vec![CLS, 999, SEP]], None).unwrap_err();
    assert!(matches!(err, EncoderError::TokenOutOfRange { id: 999, .. }));
}

#[test]
fn empty_batch_is_rejected() {
    let m = tiny_model(1);
    assert!(matches!(m.pooled(&[], None), Err(EncoderError::EmptyBatch)));
}

#[test]
fn zero_classifier_gives_uniform_probabilities() {
    let m = tiny_model(1);
    let w = m.main.classifier.weight();
    w.set_values(&vec![0.0; w.len()]).unwrap();
    let p = m.classify(&m.pooled(&batch(&m), None).unwrap()).unwrap();
    for row in p.to_rows() {
        for v in row {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }
}

#[test]
fn classify_matches_direct_softmax_oracle() {
    let m = tiny_model(9);
    let h = m.pooled(&batch(&m), None).unwrap();
    let p = m.classify(&h).unwrap();
    let w = m.main.classifier.weight().to_rows();
    for (r, hrow) in h.to_rows().iter().enumerate() {
        let logits: Vec<f64> = w
            .iter()
            .map(|wr| wr.iter().zip(hrow).map(|(a, b)| a * b).sum())
            .collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        let prow = p.row(r);
        assert!((prow.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        for (c, l) in logits.iter().enumerate() {
            assert!((prow[c] - l.exp() / z).abs() < 1e-12);
        }
    }
}

#[test]
fn identity_projection_passes_nonnegative_input() {
    let eye = |n: usize| {
        let mut v = vec![0.0; n * n];
        (0..n).for_each(|i| v[i * n + i] = 1.0);
        Tensor::param(Shape::new(n, n), v).unwrap()
    };
    let head = ProjectionHead::from_weights(eye(3), eye(3)).unwrap();
    let h = Tensor::from_rows(&[vec![0.5, 2.0, 0.0]]).unwrap();
    assert_eq!(head.project(&h).unwrap().to_vec(), vec![0.5, 2.0, 0.0]);
    let zero = Tensor::zeros(Shape::new(1, 3));
    assert_eq!(head.project(&zero).unwrap().to_vec(), vec![0.0; 3]);
}

#[test]
fn projection_matches_two_step_oracle() {
    let m = tiny_model(3);
    let h = m.pooled(&batch(&m), None).unwrap();
    let z = m.project(&h).unwrap();
    let (w1, w2) = m.main.projection.weights();
    let (w1, w2) = (w1.to_rows(), w2.to_rows());
    for (r, hrow) in h.to_rows().iter().enumerate() {
        let hidden: Vec<f64> = w1
            .iter()
            .map(|w| w.iter().zip(hrow).map(|(a, b)| a * b).sum::<f64>().max(0.0))
            .collect();
        let expect: Vec<f64> = w2
            .iter()
            .map(|w| w.iter().zip(&hidden).map(|(a, b)| a * b).sum())
            .collect();
        for (a, b) in z.row(r).iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn weighting_confidence_rows_are_softmax_of_logits() {
    let m = tiny_model(6);
    let b = batch(&m);
    let net = m.weighting.as_ref().unwrap();
    let logits = net.logits(&b, None).unwrap();
    let w = m.weighting_confidence(&b, None).unwrap();
    for (r, lrow) in logits.to_rows().iter().enumerate() {
        let z: f64 = lrow.iter().map(|l| l.exp()).sum();
        let wrow = w.row(r);
        assert!((wrow.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        for (c, l) in lrow.iter().enumerate() {
            assert!((wrow[c] - l.exp() / z).abs() < 1e-12);
        }
    }
    let cw = net.classifier.weight();
    cw.set_values(&vec![0.0; cw.len()]).unwrap();
    let uniform = m.weighting_confidence(&b, None).unwrap();
    assert!(uniform.values().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
}

#[test]
fn weighting_net_shares_no_parameters() {
    let m = tiny_model(8);
    let b = batch(&m);
    let main_before = bits(&m.pooled(&b, None).unwrap());
    let w_before = bits(&m.weighting_confidence(&b, None).unwrap());
    let net = m.weighting.as_ref().unwrap();
    for (_, p) in net.encoder.named_parameters("w") {
        let v: Vec<f64> = p.values().iter().map(|x| x + 0.1).collect();
        p.set_values(&v).unwrap();
    }
    assert_eq!(main_before, bits(&m.pooled(&b, None).unwrap()));
    assert_ne!(w_before, bits(&m.weighting_confidence(&b, None).unwrap()));

    let w_now = bits(&m.weighting_confidence(&b, None).unwrap());
    let e = m.main.encoder.embedding();
    let v: Vec<f64> = e.values().iter().map(|x| x * 1.5).collect();
    e.set_values(&v).unwrap();
    assert_eq!(w_now, bits(&m.weighting_confidence(&b, None).unwrap()));

    let main_ids: Vec<usize> = m.main_parameter_ids();
    let net_ids: Vec<usize> = net
        .encoder
        .named_parameters("w")
        .iter()
        .map(|(_, t)| t.node_id())
        .collect();
    assert!(net_ids.iter().all(|id| !main_ids.contains(id)));
}

impl Model {
    fn main_parameter_ids(&self) -> Vec<usize> {
        self.main
            .encoder
            .named_parameters("m")
            .iter()
            .map(|(_, t)| t.node_id())
            .collect()
    }
}

#[test]
fn ce_through_full_encoder_matches_finite_differences() {
    let m = tiny_model(11);
    let b = batch(&m);
    let labels = [0usize, 1, 2, 1];
    let loss = || {
        let logits = m.main.classifier.logits(&m.pooled(&b, None).unwrap()).unwrap();
        logits.log_softmax_rows().pick(&labels).unwrap().mean().neg()
    };
    for p in m.parameters() {
        p.zero_grad();
    }
    backward(&loss()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst: f64 = 0.0;
    for (name, p) in m.named_parameters().into_iter().filter(|(n, _)| !n.starts_with("weighting") && !n.starts_with("projection")) {
        let grad = p.grad();
        let base = p.to_vec();
        // sample a few coordinates per tensor
        for _ in 0..4 {
            let i = rng.random_range(0..base.len());
            let step = 1e-6;
            let mut v = base.clone();
            v[i] += step;
            p.set_values(&v).unwrap();
            let up = loss().item();
            v[i] = base[i] - step;
            p.set_values(&v).unwrap();
            let down = loss().item();
            p.set_values(&base).unwrap();
            let fd = (up - down) / (2.0 * step);
            let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            assert!(err < 1e-3, "{name}[{i}]: fd {fd} vs {}", grad[i]);
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-3);
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let m = tiny_model(12);
    let meta = serde_json::json!({"method": "scl", "epoch": 3});
    let bytes = checkpoint_bytes(&m, &meta).unwrap();
    let (loaded, meta2) = model_from_bytes(&bytes).unwrap();
    assert_eq!(meta, meta2);
    assert_eq!(bytes, checkpoint_bytes(&loaded, &meta2).unwrap());
    let b = batch(&m);
    assert_eq!(
        bits(&m.pooled(&b, None).unwrap()),
        bits(&loaded.pooled(&b, None).unwrap())
    );
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let m = tiny_model(12);
    let mut bytes = checkpoint_bytes(&m, &serde_json::Value::Null).unwrap();
    bytes.pop();
    assert!(model_from_bytes(&bytes).is_err());
    assert!(model_from_bytes(b"nonsense").is_err());
}

#[test]
fn hidden_must_divide_heads() {
    let mut cfg = EncoderConfig::new(10);
    cfg.heads = 3;
    assert!(cfg.validate().is_err());
}
