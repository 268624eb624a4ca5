//! Whitespace tokenizer, small transformer encoder, classification and
//! projection heads, the weighting network, and checkpoints.

mod checkpoint;
mod heads;
mod init;
mod model;
mod transformer;
mod vocab;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, model_from_bytes, save_checkpoint, CHECKPOINT_VERSION,
};
pub use heads::{Classifier, ProjectionHead};
pub use model::{Model, ModelConfig, TextClassifier, WeightingNet};
pub use transformer::{pooled, Encoder, EncoderConfig, EncoderOutput};
pub use vocab::{Vocabulary, CLS, PAD, SEP, UNK};

use crate::autodiff::AutodiffError;

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error("vocabulary has no regular tokens")]
    EmptyVocabulary,
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("invalid encoder configuration: {0}")]
    InvalidConfig(String),
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: usize, vocab_size: usize },
    #[error("sequence of length {len} exceeds maximum {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("model has no weighting network")]
    MissingWeightingNet,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests;
