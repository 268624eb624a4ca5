use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::heads::{Classifier, ProjectionHead};
use super::transformer::{pooled, Encoder, EncoderConfig, EncoderOutput};
use super::vocab::Vocabulary;
use super::EncoderError;
use crate::autodiff::Tensor;

/// Everything needed to rebuild a model's parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub classes: usize,
    pub projection_dim: usize,
    /// Present when the label-aware objectives need a weighting network.
    pub weighting: Option<EncoderConfig>,
}

impl ModelConfig {
    /// Main encoder per [`EncoderConfig::new`], projection width 64, no
    /// weighting network.
    pub fn new(vocab_size: usize, classes: usize) -> Self {
        Self {
            encoder: EncoderConfig::new(vocab_size),
            classes,
            projection_dim: 64,
            weighting: None,
        }
    }

    /// Adds a weighting network of the same family with hidden size
    /// `hidden` (one layer, two heads).
    pub fn with_weighting(mut self, hidden: usize) -> Self {
        self.weighting = Some(EncoderConfig {
            hidden,
            layers: 1,
            heads: 2,
            ffn: hidden * 2,
            ..self.encoder.clone()
        });
        self
    }
}

/// The trained encoder plus its classifier and projection heads.
pub struct TextClassifier {
    pub encoder: Encoder,
    pub classifier: Classifier,
    pub projection: ProjectionHead,
}

impl TextClassifier {
    fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self, EncoderError> {
        let encoder = Encoder::new(cfg.encoder.clone(), rng)?;
        let classifier = Classifier::new(cfg.classes, cfg.encoder.hidden, rng);
        let projection = ProjectionHead::new(cfg.projection_dim, cfg.encoder.hidden, rng);
        Ok(Self {
            encoder,
            classifier,
            projection,
        })
    }

    fn named_parameters(&self, out: &mut Vec<(String, Tensor)>) {
        out.extend(self.encoder.named_parameters("encoder"));
        out.push(("classifier.weight".into(), self.classifier.weight().clone()));
        let (w1, w2) = self.projection.weights();
        out.push(("projection.w1".into(), w1.clone()));
        out.push(("projection.w2".into(), w2.clone()));
    }
}

/// Auxiliary encoder + classifier whose softmax confidences weight the
/// label-aware contrastive loss. Shares no parameters with the main model.
pub struct WeightingNet {
    pub encoder: Encoder,
    pub classifier: Classifier,
}

impl WeightingNet {
    pub fn new(cfg: EncoderConfig, classes: usize, rng: &mut ChaCha8Rng) -> Result<Self, EncoderError> {
        let hidden = cfg.hidden;
        Ok(Self {
            encoder: Encoder::new(cfg, rng)?,
            classifier: Classifier::new(classes, hidden, rng),
        })
    }

    /// Pooled weighting-net representations, `N x hidden`.
    pub fn pooled(
        &self,
        batch: &[Vec<usize>],
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<Tensor, EncoderError> {
        pooled(&self.encoder.encode(batch, dropout)?)
    }

    pub fn logits(
        &self,
        batch: &[Vec<usize>],
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<Tensor, EncoderError> {
        self.classifier.logits(&self.pooled(batch, dropout)?)
    }

    /// Per-example class confidences `w = softmax(logits)`, `N x classes`.
    pub fn confidence(
        &self,
        batch: &[Vec<usize>],
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<Tensor, EncoderError> {
        Ok(self.logits(batch, dropout)?.softmax_rows())
    }

    fn named_parameters(&self, out: &mut Vec<(String, Tensor)>) {
        out.extend(self.encoder.named_parameters("weighting.encoder"));
        out.push((
            "weighting.classifier.weight".into(),
            self.classifier.weight().clone(),
        ));
    }
}

/// Vocabulary, label catalog, and all trainable parts.
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub labels: Vec<String>,
    pub main: TextClassifier,
    pub weighting: Option<WeightingNet>,
}

/// Seed offset for the weighting network's initialisation stream, so
/// adding it never changes the main model's initial weights.
const WEIGHTING_STREAM: u64 = 0x5EED_0F_0E16;

impl Model {
    pub fn new(
        config: ModelConfig,
        vocab: Vocabulary,
        labels: Vec<String>,
        seed: u64,
    ) -> Result<Self, EncoderError> {
        if config.encoder.vocab_size != vocab.len() {
            return Err(EncoderError::InvalidConfig(format!(
                "config vocab size {} != vocabulary size {}",
                config.encoder.vocab_size,
                vocab.len()
            )));
        }
        if config.classes < 2 || labels.len() != config.classes {
            return Err(EncoderError::InvalidConfig(format!(
                "{} labels for {} classes (need at least 2)",
                labels.len(),
                config.classes
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let main = TextClassifier::new(&config, &mut rng)?;
        let weighting = match &config.weighting {
            Some(wcfg) => {
                let mut wrng = ChaCha8Rng::seed_from_u64(seed ^ WEIGHTING_STREAM);
                Some(WeightingNet::new(wcfg.clone(), config.classes, &mut wrng)?)
            }
            None => None,
        };
        Ok(Self {
            config,
            vocab,
            labels,
            main,
            weighting,
        })
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    /// All trainable tensors with stable dotted names.
    pub fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.main.named_parameters(&mut out);
        if let Some(w) = &self.weighting {
            w.named_parameters(&mut out);
        }
        out
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(Tensor::len).sum()
    }

    pub fn tokenize_batch<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<Vec<usize>>, EncoderError> {
        texts
            .iter()
            .map(|t| self.vocab.tokenize(t.as_ref(), self.config.encoder.max_len))
            .collect()
    }

    pub fn encode(
        &self,
        batch: &[Vec<usize>],
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<Vec<EncoderOutput>, EncoderError> {
        self.main.encoder.encode(batch, dropout)
    }

    /// Pooled `[CLS]` representations of the main encoder, `N x hidden`.
    pub fn pooled(
        &self,
        batch: &[Vec<usize>],
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<Tensor, EncoderError> {
        pooled(&self.encode(batch, dropout)?)
    }

    pub fn classify(&self, h_cls: &Tensor) -> Result<Tensor, EncoderError> {
        self.main.classifier.classify(h_cls)
    }

    pub fn project(&self, h: &Tensor) -> Result<Tensor, EncoderError> {
        self.main.projection.project(h)
    }

    pub fn weighting_confidence(
        &self,
        batch: &[Vec<usize>],
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<Tensor, EncoderError> {
        self.weighting
            .as_ref()
            .ok_or(EncoderError::MissingWeightingNet)?
            .confidence(batch, dropout)
    }

    /// Arg-max predictions without dropout, computed in chunks.
    pub fn predict(&self, batch: &[Vec<usize>]) -> Result<Vec<usize>, EncoderError> {
        let mut out = Vec::with_capacity(batch.len());
        for chunk in batch.chunks(64) {
            let logits = self.main.classifier.logits(&self.pooled(chunk, None)?)?;
            out.extend(logits.to_rows().iter().map(|r| argmax(r)));
        }
        Ok(out)
    }

    /// Copies of every parameter's values, in `named_parameters` order.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.parameters().iter().map(Tensor::to_vec).collect()
    }

    pub fn restore(&self, snapshot: &[Vec<f64>]) -> Result<(), EncoderError> {
        let params = self.parameters();
        if params.len() != snapshot.len() {
            return Err(EncoderError::InvalidConfig(format!(
                "snapshot has {} tensors, model has {}",
                snapshot.len(),
                params.len()
            )));
        }
        for (p, v) in params.iter().zip(snapshot) {
            p.set_values(v)?;
        }
        Ok(())
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}
