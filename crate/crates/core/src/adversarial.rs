//! Positive views: dropout re-encoding and one-step normalised-gradient
//! (FGSM-style) perturbations of the embedding matrix or of token
//! representations.
//!
//! A perturbation is `r = s · ε · g / ‖g‖₂` where `g` is the gradient of
//! the clean cross-entropy and `s = -1` under [`FgsmSign::AsPrinted`]
//! (the default) or `+1` under [`FgsmSign::Ascent`]. Gradients are taken
//! with [`grad_wrt`], so leaf accumulators used by the optimizer are never
//! touched. A zero gradient yields `r = 0`.

use log::warn;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_wrt, AutodiffError, Tensor};
use crate::encoder::{pooled, EncoderError, Model};
use crate::objectives::{cross_entropy_from_logits, ObjectiveError};

#[derive(Debug, thiserror::Error)]
pub enum AdversarialError {
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, AdversarialError>;

/// Direction of the perturbation relative to the loss gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FgsmSign {
    /// `r = -ε g/‖g‖`.
    #[default]
    AsPrinted,
    /// `r = +ε g/‖g‖`, which increases the loss to first order.
    Ascent,
}

impl FgsmSign {
    fn factor(self) -> f64 {
        match self {
            FgsmSign::AsPrinted => -1.0,
            FgsmSign::Ascent => 1.0,
        }
    }
}

/// What the token-level variant perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TokenTarget {
    /// The pooled `[CLS]` representation fed to the classifier.
    #[default]
    Pooled,
    /// Every input token representation of a sequence (normalised per sequence),
    /// followed by a fresh encoder pass.
    InputTokens,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationTarget {
    EmbeddingMatrix,
    TokenRepresentations,
}

/// A constant offset together with what it was computed for.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub target: PerturbationTarget,
    /// One tensor for the embedding matrix or pooled rows; one per
    /// sequence for input-token offsets.
    pub offsets: Vec<Tensor>,
    pub epsilon: f64,
    /// Units (matrix, rows or sequences) whose source gradient was zero.
    pub zero_gradient: usize,
}

impl Perturbation {
    /// The single offset tensor of an embedding-matrix or pooled perturbation.
    pub fn offset(&self) -> &Tensor {
        &self.offsets[0]
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(AdversarialError::NonPositiveEpsilon(epsilon))
    }
}

/// `sign · ε · g / ‖g‖₂`, or zeros (and `false`) when `g = 0`.
pub fn normalized_step(grad: &[f64], epsilon: f64, sign: FgsmSign) -> (Vec<f64>, bool) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return (vec![0.0; grad.len()], false);
    }
    let k = sign.factor() * epsilon / norm;
    (grad.iter().map(|g| g * k).collect(), true)
}

/// One global perturbation of the whole embedding matrix from `∇_V loss`.
pub fn embedding_perturbation(
    loss: &Tensor,
    embedding: &Tensor,
    epsilon: f64,
    sign: FgsmSign,
) -> Result<Perturbation> {
    check_epsilon(epsilon)?;
    let grad = grad_wrt(loss, embedding)?;
    let (r, nonzero) = normalized_step(&grad.values(), epsilon, sign);
    if !nonzero {
        warn!("embedding gradient is zero; perturbed view equals the clean view");
    }
    Ok(Perturbation {
        target: PerturbationTarget::EmbeddingMatrix,
        offsets: vec![Tensor::constant(embedding.shape(), r)?],
        epsilon,
        zero_gradient: usize::from(!nonzero),
    })
}

/// Row-wise perturbation of pooled representations `h: N x d`, each row
/// normalised by its own gradient norm.
pub fn token_perturbation(
    loss: &Tensor,
    h: &Tensor,
    epsilon: f64,
    sign: FgsmSign,
) -> Result<Perturbation> {
    check_epsilon(epsilon)?;
    let grad = grad_wrt(loss, h)?;
    let mut r = Vec::with_capacity(h.len());
    let mut zero = 0;
    for row in grad.to_rows() {
        let (step, nonzero) = normalized_step(&row, epsilon, sign);
        zero += usize::from(!nonzero);
        r.extend(step);
    }
    if zero > 0 {
        warn!("{zero} example(s) had a zero gradient; their perturbation is zero");
    }
    Ok(Perturbation {
        target: PerturbationTarget::TokenRepresentations,
        offsets: vec![Tensor::constant(h.shape(), r)?],
        epsilon,
        zero_gradient: zero,
    })
}

/// Per-sequence perturbation of first-layer inputs, one offset per input tensor.
pub fn input_token_perturbation(
    loss: &Tensor,
    inputs: &[Tensor],
    epsilon: f64,
    sign: FgsmSign,
) -> Result<Perturbation> {
    check_epsilon(epsilon)?;
    let mut offsets = Vec::with_capacity(inputs.len());
    let mut zero = 0;
    for input in inputs {
        let grad = grad_wrt(loss, input)?;
        let (step, nonzero) = normalized_step(&grad.values(), epsilon, sign);
        zero += usize::from(!nonzero);
        offsets.push(Tensor::constant(input.shape(), step)?);
    }
    Ok(Perturbation {
        target: PerturbationTarget::TokenRepresentations,
        offsets,
        epsilon,
        zero_gradient: zero,
    })
}

/// Re-encodes the same ids with a fresh dropout mask and returns the
/// pooled view. Labels of the view are those of the originals.
pub fn dropout_view(model: &Model, batch: &[Vec<usize>], rng: &mut dyn RngCore) -> Result<Tensor> {
    if model.config.encoder.keep_prob >= 1.0 {
        warn!("dropout is disabled (keep_prob = 1); dropout views equal the originals");
    }
    Ok(model.pooled(batch, Some(rng))?)
}

/// Clean and perturbed pooled representations for one batch.
pub struct AdversarialViews {
    pub clean: Tensor,
    pub clean_loss: Tensor,
    pub perturbed: Tensor,
    pub perturbation: Perturbation,
}

/// Embedding-matrix variant: perturbs `V` by the normalised gradient of
/// the clean cross-entropy and re-encodes through `V + r`. `V` is never
/// written.
pub fn fgsm_embedding(
    model: &Model,
    batch: &[Vec<usize>],
    labels: &[usize],
    epsilon: f64,
    sign: FgsmSign,
    mut dropout: Option<&mut dyn RngCore>,
) -> Result<AdversarialViews> {
    let clean = model.pooled(batch, crate::reborrow(&mut dropout))?;
    let clean_loss = cross_entropy_from_logits(&model.main.classifier.logits(&clean)?, labels)?;
    let embedding = model.main.encoder.embedding();
    let perturbation = embedding_perturbation(&clean_loss, embedding, epsilon, sign)?;
    let perturbed = pooled(&model.main.encoder.encode_with_embedding_offset(
        batch,
        perturbation.offset(),
        dropout,
    )?)?;
    Ok(AdversarialViews {
        clean,
        clean_loss,
        perturbed,
        perturbation,
    })
}

/// Token-representation variant: `h_j = h_i + r_i` with `r_i` normalised
/// per example. No parameter is touched and no extra encoder pass runs
/// for [`TokenTarget::Pooled`].
pub fn fgsm_token(
    model: &Model,
    batch: &[Vec<usize>],
    labels: &[usize],
    epsilon: f64,
    sign: FgsmSign,
    target: TokenTarget,
    mut dropout: Option<&mut dyn RngCore>,
) -> Result<AdversarialViews> {
    let outputs = model.encode(batch, crate::reborrow(&mut dropout))?;
    let clean = pooled(&outputs)?;
    let clean_loss = cross_entropy_from_logits(&model.main.classifier.logits(&clean)?, labels)?;
    let (perturbation, perturbed) = match target {
        TokenTarget::Pooled => {
            let p = token_perturbation(&clean_loss, &clean, epsilon, sign)?;
            let h = clean.add(p.offset())?;
            (p, h)
        }
        TokenTarget::InputTokens => {
            let inputs: Vec<Tensor> = outputs.iter().map(|o| o.input.clone()).collect();
            let p = input_token_perturbation(&clean_loss, &inputs, epsilon, sign)?;
            let h = pooled(&model.main.encoder.encode_with_input_offsets(batch, &p.offsets, dropout)?)?;
            (p, h)
        }
    };
    Ok(AdversarialViews {
        clean,
        clean_loss,
        perturbed,
        perturbation,
    })
}
