//! One forward pass of a method's full objective.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::adversarial::{
    embedding_perturbation, input_token_perturbation, token_perturbation, Perturbation, TokenTarget,
};
use crate::autodiff::Tensor;
use crate::encoder::{pooled, Model};
use crate::objectives::{
    combine, cross_entropy_from_logits, infonce, lcl_loss, ntxent, ContrastBatch, LossTerms, Method,
    ObjectiveConfig, Reduction, WeightingView,
};
use crate::reborrow;

/// Perturbations to reuse instead of recomputing, so that a loss can be
/// re-evaluated at nearby parameters with the views held fixed.
#[derive(Debug, Clone, Default)]
pub struct FrozenPerturbations {
    pub main: Option<Perturbation>,
    pub weighting: Option<Perturbation>,
}

/// Scalar values of one step's loss terms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub total: f64,
    pub ce: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ce_perturbed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weighting_ce: Option<f64>,
    /// Contrastive term as mixed into the total.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub contrastive: Option<f64>,
    /// NTXent or label-aware loss summed over anchors.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub contrastive_sum: Option<f64>,
}

impl LossComponents {
    /// Component-wise mean. Optional terms average over the entries that
    /// have them.
    pub fn mean(items: &[LossComponents]) -> LossComponents {
        let n = items.len().max(1) as f64;
        let opt = |f: fn(&LossComponents) -> Option<f64>| {
            let present: Vec<f64> = items.iter().filter_map(f).collect();
            (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
        };
        LossComponents {
            total: items.iter().map(|c| c.total).sum::<f64>() / n,
            ce: items.iter().map(|c| c.ce).sum::<f64>() / n,
            ce_perturbed: opt(|c| c.ce_perturbed),
            weighting_ce: opt(|c| c.weighting_ce),
            contrastive: opt(|c| c.contrastive),
            contrastive_sum: opt(|c| c.contrastive_sum),
        }
    }
}

pub struct StepOutput {
    pub total: Tensor,
    pub components: LossComponents,
    /// The perturbations this step used, ready to be frozen.
    pub perturbations: FrozenPerturbations,
}

fn missing(what: &str) -> TrainError {
    TrainError::Config(format!("frozen perturbations lack the {what} perturbation"))
}

/// Builds the combined objective of `objective.method` for one batch.
///
/// Dropout masks are drawn from `dropout` in a fixed order, so the same
/// seed reproduces the same views. With `λ = 0` no contrastive view is
/// built and no extra randomness is consumed.
pub fn objective_step(
    model: &Model,
    batch: &[Vec<usize>],
    labels: &[usize],
    objective: &ObjectiveConfig,
    mut dropout: Option<&mut dyn RngCore>,
    frozen: Option<&FrozenPerturbations>,
) -> Result<StepOutput, TrainError> {
    objective.validate()?;
    let method = objective.method;
    let opts = objective.options;
    let contrast = objective.lambda > 0.0;
    let mut terms = LossTerms::default();
    let mut used = FrozenPerturbations::default();
    let mut comp = LossComponents::default();

    let outputs = model.encode(batch, reborrow(&mut dropout))?;
    let h = pooled(&outputs)?;
    let ce = cross_entropy_from_logits(&model.main.classifier.logits(&h)?, labels)?;
    comp.ce = ce.item();

    // Adversarial view of the main encoder, shared by CAT, TACT and TLCL.
    let perturbed_view = |dropout: Option<&mut dyn RngCore>| -> Result<(Tensor, Perturbation), TrainError> {
        let p = match frozen {
            Some(f) => f.main.clone().ok_or_else(|| missing("main"))?,
            None if method == Method::Cat => {
                embedding_perturbation(&ce, model.main.encoder.embedding(), objective.epsilon, opts.fgsm_sign)?
            }
            None => match opts.token_target {
                TokenTarget::Pooled => token_perturbation(&ce, &h, objective.epsilon, opts.fgsm_sign)?,
                TokenTarget::InputTokens => {
                    let inputs: Vec<Tensor> = outputs.iter().map(|o| o.input.clone()).collect();
                    input_token_perturbation(&ce, &inputs, objective.epsilon, opts.fgsm_sign)?
                }
            },
        };
        let view = if method == Method::Cat {
            pooled(&model.main.encoder.encode_with_embedding_offset(batch, p.offset(), dropout)?)?
        } else {
            match opts.token_target {
                TokenTarget::Pooled => h.add(p.offset())?,
                TokenTarget::InputTokens => {
                    pooled(&model.main.encoder.encode_with_input_offsets(batch, &p.offsets, dropout)?)?
                }
            }
        };
        Ok((view, p))
    };

    match method {
        Method::Ce => {}
        Method::Scl => {
            if contrast {
                let view = model.pooled(batch, reborrow(&mut dropout))?;
                let reps = maybe_project(model, &h, &view, opts.project_all)?;
                let cb = ContrastBatch::from_views(&reps.0, &reps.1, labels)?;
                let sum = ntxent(&cb, objective.tau)?;
                terms.ntxent = Some(reduce(&sum, &cb, opts.reduction, &mut comp));
            }
        }
        Method::Cat | Method::Tact => {
            let (view, p) = perturbed_view(reborrow(&mut dropout))?;
            used.main = Some(p);
            let ce_p = cross_entropy_from_logits(&model.main.classifier.logits(&view)?, labels)?;
            comp.ce_perturbed = Some(ce_p.item());
            terms.ce_perturbed = Some(ce_p);
            if contrast {
                let z = model.project(&Tensor::concat_rows(&[h.clone(), view])?)?;
                let loss = infonce(&z, objective.tau, opts.infonce_anchors)?;
                comp.contrastive = Some(loss.item());
                terms.infonce = Some(loss);
            }
        }
        Method::Lcl | Method::Tlcl => {
            let net = model
                .weighting
                .as_ref()
                .ok_or(crate::encoder::EncoderError::MissingWeightingNet)?;
            let hw = net.pooled(batch, reborrow(&mut dropout))?;
            let lw = cross_entropy_from_logits(&net.classifier.logits(&hw)?, labels)?;
            comp.weighting_ce = Some(lw.item());
            if contrast {
                let w = net.classifier.classify(&hw)?;
                let (view, w_view) = if method == Method::Lcl {
                    (model.pooled(batch, reborrow(&mut dropout))?, w.clone())
                } else {
                    let (view, p) = perturbed_view(reborrow(&mut dropout))?;
                    used.main = Some(p);
                    let w_view = match opts.weighting_view {
                        WeightingView::Clean => w.clone(),
                        WeightingView::Adversarial => {
                            let p = match frozen {
                                Some(f) => f.weighting.clone().ok_or_else(|| missing("weighting"))?,
                                None => token_perturbation(&lw, &hw, objective.epsilon, opts.fgsm_sign)?,
                            };
                            let wv = net.classifier.classify(&hw.add(p.offset())?)?;
                            used.weighting = Some(p);
                            wv
                        }
                    };
                    (view, w_view)
                };
                let reps = maybe_project(model, &h, &view, opts.project_all)?;
                let cb = ContrastBatch::from_views(&reps.0, &reps.1, labels)?;
                let weights = Tensor::concat_rows(&[w, w_view])?;
                let sum = lcl_loss(&cb, &weights, objective.tau)?;
                terms.lcl = Some(reduce(&sum, &cb, opts.reduction, &mut comp));
            }
            terms.weighting_ce = Some(lw);
        }
    }
    terms.ce = Some(ce);
    let total = combine(method, objective.lambda, &terms)?;
    comp.total = total.item();
    Ok(StepOutput {
        total,
        components: comp,
        perturbations: used,
    })
}

fn maybe_project(model: &Model, h: &Tensor, view: &Tensor, project: bool) -> Result<(Tensor, Tensor), TrainError> {
    if project {
        Ok((model.project(h)?, model.project(view)?))
    } else {
        Ok((h.clone(), view.clone()))
    }
}

fn reduce(sum: &Tensor, batch: &ContrastBatch, reduction: Reduction, comp: &mut LossComponents) -> Tensor {
    let mixed = match reduction {
        Reduction::Sum => sum.clone(),
        Reduction::Mean => sum.scale(1.0 / batch.active_anchors().max(1) as f64),
    };
    comp.contrastive_sum = Some(sum.item());
    comp.contrastive = Some(mixed.item());
    mixed
}
