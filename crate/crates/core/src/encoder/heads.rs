use rand_chacha::ChaCha8Rng;

use super::init;
use super::EncoderError;
use crate::autodiff::Tensor;

/// Linear softmax classifier over pooled states, weight `classes x hidden`.
pub struct Classifier {
    weight: Tensor,
}

impl Classifier {
    pub fn new(classes: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: init::uniform(classes, hidden, hidden, rng),
        }
    }

    pub fn from_weight(weight: Tensor) -> Self {
        Self { weight }
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn classes(&self) -> usize {
        self.weight.rows()
    }

    /// `h · Wᵀ` for `h: N x hidden`.
    pub fn logits(&self, h: &Tensor) -> Result<Tensor, EncoderError> {
        Ok(h.matmul_nt(&self.weight)?)
    }

    /// Row-wise class distribution `softmax(W h)`.
    pub fn classify(&self, h: &Tensor) -> Result<Tensor, EncoderError> {
        Ok(self.logits(h)?.softmax_rows())
    }
}

/// Two-layer projection `z = W₂ relu(W₁ h)` used by the adversarial
/// objectives before InfoNCE.
pub struct ProjectionHead {
    w1: Tensor,
    w2: Tensor,
}

impl ProjectionHead {
    pub fn new(dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w1: init::uniform(dim, hidden, hidden, rng),
            w2: init::uniform(dim, dim, dim, rng),
        }
    }

    pub fn from_weights(w1: Tensor, w2: Tensor) -> Result<Self, EncoderError> {
        if w2.rows() != w2.cols() || w2.cols() != w1.rows() {
            return Err(EncoderError::InvalidConfig(format!(
                "projection weights {} and {} do not chain",
                w1.shape(),
                w2.shape()
            )));
        }
        Ok(Self { w1, w2 })
    }

    pub fn weights(&self) -> (&Tensor, &Tensor) {
        (&self.w1, &self.w2)
    }

    /// Projects every row of `h: N x hidden` to `N x dim`.
    pub fn project(&self, h: &Tensor) -> Result<Tensor, EncoderError> {
        Ok(h.matmul_nt(&self.w1)?.relu().matmul_nt(&self.w2)?)
    }
}
