use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::init;
use super::vocab::PAD;
use super::EncoderError;
use crate::autodiff::Tensor;

/// Size of one transformer encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_len: usize,
    /// Dropout keep probability used when dropout is enabled.
    pub keep_prob: f64,
}

impl EncoderConfig {
    /// Two layers, four heads, hidden size 64, sequences up to 128 ids.
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            hidden: 64,
            layers: 2,
            heads: 4,
            ffn: 128,
            max_len: 128,
            keep_prob: 0.9,
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |msg: String| Err(EncoderError::InvalidConfig(msg));
        if self.vocab_size == 0 || self.hidden == 0 || self.ffn == 0 || self.heads == 0 {
            return bad(format!("sizes must be positive: {self:?}"));
        }
        if self.hidden % self.heads != 0 {
            return bad(format!(
                "hidden size {} not divisible by {} heads",
                self.hidden, self.heads
            ));
        }
        if self.max_len < 3 {
            return bad(format!("max_len must be at least 3, got {}", self.max_len));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return bad(format!("keep_prob {} outside (0, 1]", self.keep_prob));
        }
        Ok(())
    }
}

/// Final-layer states of one sequence.
///
/// `hidden` has one row per non-`[PAD]` position; `cls` is row 0.
/// `input` is the embedding output fed to the first layer.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub hidden: Tensor,
    pub cls: Tensor,
    pub input: Tensor,
}

struct Norm {
    gain: Tensor,
    bias: Tensor,
}

impl Norm {
    fn new(dim: usize) -> Self {
        Self {
            gain: init::filled(1, dim, 1.0),
            bias: init::filled(1, dim, 0.0),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor, EncoderError> {
        Ok(x.layer_norm_rows(1e-5).mul_row(&self.gain)?.add_row(&self.bias)?)
    }
}

struct Layer {
    attn_norm: Norm,
    wq: Tensor,
    bq: Tensor,
    wk: Tensor,
    bk: Tensor,
    wv: Tensor,
    bv: Tensor,
    wo: Tensor,
    bo: Tensor,
    ffn_norm: Norm,
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
}

impl Layer {
    fn new(cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        let (h, f) = (cfg.hidden, cfg.ffn);
        Self {
            attn_norm: Norm::new(h),
            wq: init::uniform(h, h, h, rng),
            bq: init::filled(1, h, 0.0),
            wk: init::uniform(h, h, h, rng),
            bk: init::filled(1, h, 0.0),
            wv: init::uniform(h, h, h, rng),
            bv: init::filled(1, h, 0.0),
            wo: init::uniform(h, h, h, rng),
            bo: init::filled(1, h, 0.0),
            ffn_norm: Norm::new(h),
            w1: init::uniform(h, f, h, rng),
            b1: init::filled(1, f, 0.0),
            w2: init::uniform(f, h, f, rng),
            b2: init::filled(1, h, 0.0),
        }
    }

    fn named(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        let entries = [
            ("attn_norm.gain", &self.attn_norm.gain),
            ("attn_norm.bias", &self.attn_norm.bias),
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
            ("ffn_norm.gain", &self.ffn_norm.gain),
            ("ffn_norm.bias", &self.ffn_norm.bias),
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
        ];
        out.extend(
            entries
                .into_iter()
                .map(|(n, t)| (format!("{prefix}.{n}"), t.clone())),
        );
    }

    fn forward(
        &self,
        x: &Tensor,
        heads: usize,
        keep_prob: f64,
        dropout: &mut Option<&mut dyn RngCore>,
    ) -> Result<Tensor, EncoderError> {
        let hidden = x.cols();
        let head_dim = hidden / heads;
        let scale = 1.0 / (head_dim as f64).sqrt();

        let h = self.attn_norm.forward(x)?;
        let q = h.matmul(&self.wq)?.add_row(&self.bq)?;
        let k = h.matmul(&self.wk)?.add_row(&self.bk)?;
        let v = h.matmul(&self.wv)?.add_row(&self.bv)?;
        let mut per_head = Vec::with_capacity(heads);
        for i in 0..heads {
            let (lo, hi) = (i * head_dim, (i + 1) * head_dim);
            let (qh, kh, vh) = (q.slice_cols(lo, hi)?, k.slice_cols(lo, hi)?, v.slice_cols(lo, hi)?);
            let weights = qh.matmul_nt(&kh)?.scale(scale).softmax_rows();
            per_head.push(weights.matmul(&vh)?);
        }
        let attended = if heads == 1 {
            per_head.pop().expect("one head")
        } else {
            Tensor::concat_cols(&per_head)?
        };
        let attn_out = attended.matmul(&self.wo)?.add_row(&self.bo)?;
        let x = x.add(&apply_dropout(&attn_out, keep_prob, dropout)?)?;

        let h = self.ffn_norm.forward(&x)?;
        let ff = h
            .matmul(&self.w1)?
            .add_row(&self.b1)?
            .relu()
            .matmul(&self.w2)?
            .add_row(&self.b2)?;
        Ok(x.add(&apply_dropout(&ff, keep_prob, dropout)?)?)
    }
}

fn apply_dropout(
    x: &Tensor,
    keep_prob: f64,
    dropout: &mut Option<&mut dyn RngCore>,
) -> Result<Tensor, EncoderError> {
    match dropout {
        Some(rng) => Ok(x.dropout(keep_prob, &mut **rng)?),
        None => Ok(x.clone()),
    }
}

/// Pre-norm transformer encoder with learned token and position embeddings.
pub struct Encoder {
    config: EncoderConfig,
    embedding: Tensor,
    positions: Tensor,
    layers: Vec<Layer>,
    final_norm: Norm,
}

impl Encoder {
    pub fn new(config: EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self, EncoderError> {
        config.validate()?;
        let embedding = init::normal(config.vocab_size, config.hidden, 0.02, rng);
        let positions = init::normal(config.max_len, config.hidden, 0.02, rng);
        let layers = (0..config.layers).map(|_| Layer::new(&config, rng)).collect();
        let final_norm = Norm::new(config.hidden);
        Ok(Self {
            config,
            embedding,
            positions,
            layers,
            final_norm,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Word embedding matrix, `vocab_size x hidden`.
    pub fn embedding(&self) -> &Tensor {
        &self.embedding
    }

    pub fn named_parameters(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let mut out = vec![
            (format!("{prefix}.embedding"), self.embedding.clone()),
            (format!("{prefix}.positions"), self.positions.clone()),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            layer.named(&format!("{prefix}.layer{i}"), &mut out);
        }
        out.push((format!("{prefix}.final_norm.gain"), self.final_norm.gain.clone()));
        out.push((format!("{prefix}.final_norm.bias"), self.final_norm.bias.clone()));
        out
    }

    /// Encodes every sequence. Passing an RNG enables dropout.
    pub fn encode(
        &self,
        batch: &[Vec<usize>],
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<Vec<EncoderOutput>, EncoderError> {
        self.encode_inner(&self.embedding, batch, None, dropout)
    }

    /// Encodes through the perturbed embedding matrix `V + offset`.
    ///
    /// The offset is added as a graph node, so gradients still reach `V`
    /// and `V` itself is never written.
    pub fn encode_with_embedding_offset(
        &self,
        batch: &[Vec<usize>],
        offset: &Tensor,
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<Vec<EncoderOutput>, EncoderError> {
        let table = self.embedding.add(offset)?;
        self.encode_inner(&table, batch, None, dropout)
    }

    /// Encodes with a per-sequence offset added to the first-layer input
    /// (one `len x hidden` tensor per sequence, `len` = non-pad count).
    pub fn encode_with_input_offsets(
        &self,
        batch: &[Vec<usize>],
        offsets: &[Tensor],
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<Vec<EncoderOutput>, EncoderError> {
        if offsets.len() != batch.len() {
            return Err(EncoderError::InvalidConfig(format!(
                "{} offsets for {} sequences",
                offsets.len(),
                batch.len()
            )));
        }
        self.encode_inner(&self.embedding, batch, Some(offsets), dropout)
    }

    fn encode_inner(
        &self,
        table: &Tensor,
        batch: &[Vec<usize>],
        offsets: Option<&[Tensor]>,
        mut dropout: Option<&mut dyn RngCore>,
    ) -> Result<Vec<EncoderOutput>, EncoderError> {
        if batch.is_empty() {
            return Err(EncoderError::EmptyBatch);
        }
        batch
            .iter()
            .enumerate()
            .map(|(i, ids)| {
                let offset = offsets.map(|o| &o[i]);
                self.encode_one(table, ids, offset, &mut dropout)
            })
            .collect()
    }

    fn encode_one(
        &self,
        table: &Tensor,
        ids: &[usize],
        offset: Option<&Tensor>,
        dropout: &mut Option<&mut dyn RngCore>,
    ) -> Result<EncoderOutput, EncoderError> {
        let cfg = &self.config;
        if ids.len() > cfg.max_len {
            return Err(EncoderError::SequenceTooLong {
                len: ids.len(),
                max: cfg.max_len,
            });
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= cfg.vocab_size) {
            return Err(EncoderError::TokenOutOfRange {
                id: bad,
                vocab_size: cfg.vocab_size,
            });
        }
        // [PAD] positions are dropped entirely, which is exactly what
        // masking them out of attention keys and pooling would give for
        // every non-pad row.
        let (positions, tokens): (Vec<usize>, Vec<usize>) = ids
            .iter()
            .enumerate()
            .filter(|(_, &id)| id != PAD)
            .map(|(p, &id)| (p, id))
            .unzip();
        if tokens.is_empty() {
            return Err(EncoderError::InvalidConfig("sequence has only [PAD] ids".into()));
        }
        let mut x = table
            .gather_rows(&tokens)?
            .add(&self.positions.gather_rows(&positions)?)?;
        if let Some(offset) = offset {
            x = x.add(offset)?;
        }
        let input = x.clone();
        let mut x = apply_dropout(&x, cfg.keep_prob, dropout)?;
        for layer in &self.layers {
            x = layer.forward(&x, cfg.heads, cfg.keep_prob, dropout)?;
        }
        let hidden = self.final_norm.forward(&x)?;
        let cls = hidden.slice_rows(0, 1)?;
        Ok(EncoderOutput { hidden, cls, input })
    }
}

/// Stacks the `[CLS]` rows of a batch into `N x hidden`.
pub fn pooled(outputs: &[EncoderOutput]) -> Result<Tensor, EncoderError> {
    let rows: Vec<Tensor> = outputs.iter().map(|o| o.cls.clone()).collect();
    Ok(Tensor::concat_rows(&rows)?)
}
