use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use super::TrainError;
use crate::encoder::{EncoderConfig, ModelConfig};
use crate::objectives::{Method, ObjectiveConfig};

/// Fractions the data-efficiency sweep accepts.
pub const DATA_FRACTIONS: [f64; 4] = [0.10, 0.25, 0.50, 1.00];

/// Encoder and head sizes. Defaults give a small model that trains on a
/// CPU in seconds per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelShape {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub projection_dim: usize,
    pub keep_prob: f64,
    pub weighting_hidden: usize,
    /// Regular tokens kept when building the vocabulary.
    pub vocab_cap: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self {
            hidden: 64,
            layers: 2,
            heads: 4,
            ffn: 128,
            projection_dim: 64,
            keep_prob: 0.9,
            weighting_hidden: 32,
            vocab_cap: 20_000,
        }
    }
}

impl ModelShape {
    /// Sixteen-wide single-layer model for synthetic tasks.
    pub fn toy() -> Self {
        Self {
            hidden: 16,
            layers: 1,
            heads: 2,
            ffn: 32,
            projection_dim: 16,
            keep_prob: 0.9,
            weighting_hidden: 8,
            vocab_cap: 1_000,
        }
    }
}

/// Split-size caps applied before any subsampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCaps {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Default for SplitCaps {
    fn default() -> Self {
        Self {
            train: 50_000,
            dev: 5_000,
            test: 5_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Free-form task name carried into records and comparison grids.
    pub task: String,
    pub objective: ObjectiveConfig,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub max_seq_len: usize,
    pub seed: u64,
    /// Share of the (capped) train split used; dev and test are untouched.
    pub data_fraction: f64,
    pub caps: SplitCaps,
    #[serde(default)]
    pub model: ModelShape,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Order each epoch so batches mirror the class mix instead of
    /// shuffling uniformly.
    #[serde(default)]
    pub balanced_batches: bool,
    /// Also score the train split after every epoch.
    #[serde(default)]
    pub track_train_accuracy: bool,
}

impl TrainConfig {
    pub const DEFAULT_BATCH_SIZE: usize = 16;
    pub const DEFAULT_LEARNING_RATE: f64 = 5e-5;
    pub const DEFAULT_MAX_EPOCHS: usize = 25;
    pub const DEFAULT_PATIENCE: usize = 5;
    pub const DEFAULT_MAX_SEQ_LEN: usize = 128;

    pub fn new(method: Method) -> Self {
        Self {
            task: "task".into(),
            objective: ObjectiveConfig::new(method),
            batch_size: Self::DEFAULT_BATCH_SIZE,
            learning_rate: Self::DEFAULT_LEARNING_RATE,
            max_epochs: Self::DEFAULT_MAX_EPOCHS,
            patience: Self::DEFAULT_PATIENCE,
            max_seq_len: Self::DEFAULT_MAX_SEQ_LEN,
            seed: 0,
            data_fraction: 1.0,
            caps: SplitCaps::default(),
            model: ModelShape::default(),
            adam: AdamConfig::default(),
            balanced_batches: false,
            track_train_accuracy: false,
        }
    }

    /// The default recipe on [`ModelShape::toy`], with a learning rate
    /// suited to training from scratch and short sequences.
    pub fn toy(method: Method) -> Self {
        Self {
            learning_rate: 1e-3,
            max_seq_len: 12,
            model: ModelShape::toy(),
            ..Self::new(method)
        }
    }

    pub fn method(&self) -> Method {
        self.objective.method
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        self.objective.validate()?;
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.batch_size == 1 && self.method().is_contrastive() {
            return bad(format!(
                "{} needs batch size >= 2: with one example the anchor's only \
                 candidate is its own view, so the contrastive loss is always 0",
                self.method()
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive".into());
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return bad(format!(
                "patience must lie in 1..=max_epochs ({}), got {}",
                self.max_epochs, self.patience
            ));
        }
        if self.max_seq_len < 3 {
            return bad(format!("max_seq_len must be at least 3, got {}", self.max_seq_len));
        }
        if !(self.data_fraction > 0.0 && self.data_fraction <= 1.0) {
            return bad(format!("data fraction must lie in (0, 1], got {}", self.data_fraction));
        }
        if self.caps.train == 0 || self.caps.dev == 0 || self.caps.test == 0 {
            return bad("split caps must be positive".into());
        }
        if !(self.model.keep_prob > 0.0 && self.model.keep_prob <= 1.0) {
            return bad(format!("keep_prob must lie in (0, 1], got {}", self.model.keep_prob));
        }
        Ok(())
    }

    /// Model layout for a vocabulary of `vocab_size` and `classes` labels.
    pub fn model_config(&self, vocab_size: usize, classes: usize) -> ModelConfig {
        let shape = &self.model;
        let mut cfg = ModelConfig::new(vocab_size, classes);
        cfg.encoder = EncoderConfig {
            vocab_size,
            hidden: shape.hidden,
            layers: shape.layers,
            heads: shape.heads,
            ffn: shape.ffn,
            max_len: self.max_seq_len,
            keep_prob: shape.keep_prob,
        };
        cfg.projection_dim = shape.projection_dim;
        if self.method().needs_weighting_net() {
            cfg = cfg.with_weighting(shape.weighting_hidden);
        }
        cfg
    }
}
