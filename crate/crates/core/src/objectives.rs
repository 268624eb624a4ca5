//! Classification and contrastive losses and the per-method objectives.
//!
//! Similarities are cosine similarities scaled by `1/τ`. Every
//! contrastive loss runs through one masked log-softmax kernel: the anchor
//! itself is excluded from its denominator and the per-row maximum is
//! subtracted before exponentiation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adversarial::{FgsmSign, TokenTarget};
use crate::autodiff::{cosine_similarity_matrix, AutodiffError, Axis, Shape, Tensor};

/// Probability floor applied before `ln` in [`cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum ObjectiveError {
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("lambda must lie in [0, 1], got {0}")]
    LambdaOutOfRange(f64),
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("contrastive batch needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("contrastive batch needs an even row count, got {0}")]
    OddRows(usize),
    #[error("{rows} representation rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("view {view} has label {got}, its origin {origin} has {expected}")]
    UnpairedLabels {
        view: usize,
        origin: usize,
        expected: usize,
        got: usize,
    },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("weights must be strictly positive; found {value} at ({row}, {col})")]
    NonPositiveWeight { row: usize, col: usize, value: f64 },
    #[error("{method} objective is missing its {term} term")]
    MissingTerm { method: Method, term: &'static str },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, ObjectiveError>;

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ce,
    Scl,
    Cat,
    Tact,
    Lcl,
    Tlcl,
}

impl Method {
    /// Fixed reporting order.
    pub const ALL: [Method; 6] = [
        Method::Ce,
        Method::Scl,
        Method::Cat,
        Method::Tact,
        Method::Lcl,
        Method::Tlcl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ce => "ce",
            Method::Scl => "scl",
            Method::Cat => "cat",
            Method::Tact => "tact",
            Method::Lcl => "lcl",
            Method::Tlcl => "tlcl",
        }
    }

    /// Upper-case display label used in tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Ce => "CE",
            Method::Scl => "SCL",
            Method::Cat => "CAT",
            Method::Tact => "TACT",
            Method::Lcl => "LCL",
            Method::Tlcl => "TLCL",
        }
    }

    pub fn is_contrastive(self) -> bool {
        self != Method::Ce
    }

    pub fn needs_weighting_net(self) -> bool {
        matches!(self, Method::Lcl | Method::Tlcl)
    }

    pub fn is_adversarial(self) -> bool {
        matches!(self, Method::Cat | Method::Tact | Method::Tlcl)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown method {0:?}; valid methods: ce, scl, cat, tact, lcl, tlcl")]
pub struct UnknownMethod(pub String);

impl FromStr for Method {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownMethod(s.to_string()))
    }
}

/// Which rows act as InfoNCE anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InfoNceAnchors {
    /// Originals and views both anchor (i→i+N and i+N→i).
    #[default]
    Both,
    /// Only the first N rows anchor.
    OriginalsOnly,
}

/// What the weighting network sees when weighting view rows under TLCL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum WeightingView {
    /// View rows reuse the weights of their clean originals.
    #[default]
    Clean,
    /// The weighting network perturbs its own pooled rows and weights the
    /// views from those.
    Adversarial,
}

/// How summed contrastive losses enter the λ-mix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Divide the anchor sum by `2N`.
    #[default]
    Mean,
    /// Use the anchor sum as is.
    Sum,
}

/// Switches for choices the objectives leave open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveOptions {
    pub infonce_anchors: InfoNceAnchors,
    pub fgsm_sign: FgsmSign,
    pub token_target: TokenTarget,
    pub weighting_view: WeightingView,
    pub reduction: Reduction,
    /// Pass SCL / LCL representations through the projection head too.
    pub project_all: bool,
}

/// Loss hyperparameters shared by all methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub method: Method,
    pub lambda: f64,
    pub tau: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub options: ObjectiveOptions,
}

impl ObjectiveConfig {
    pub const DEFAULT_LAMBDA: f64 = 0.5;
    pub const DEFAULT_TAU: f64 = 0.3;
    pub const DEFAULT_EPSILON: f64 = 0.01;

    pub fn new(method: Method) -> Self {
        Self {
            method,
            lambda: Self::DEFAULT_LAMBDA,
            tau: Self::DEFAULT_TAU,
            epsilon: Self::DEFAULT_EPSILON,
            options: ObjectiveOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(ObjectiveError::LambdaOutOfRange(self.lambda));
        }
        check_tau(self.tau)?;
        if self.method.is_adversarial() && !(self.epsilon > 0.0) {
            return Err(ObjectiveError::NonPositiveEpsilon(self.epsilon));
        }
        Ok(())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(ObjectiveError::NonPositiveTemperature(tau))
    }
}

/// `2N` representations ordered as N originals then their N views, with
/// view `i + N` carrying the label of original `i`.
#[derive(Debug, Clone)]
pub struct ContrastBatch {
    reps: Tensor,
    labels: Vec<usize>,
}

impl ContrastBatch {
    pub fn new(reps: Tensor, labels: Vec<usize>) -> Result<Self> {
        let rows = reps.rows();
        if rows < 2 {
            return Err(ObjectiveError::TooFewRows(rows));
        }
        if rows % 2 != 0 {
            return Err(ObjectiveError::OddRows(rows));
        }
        if labels.len() != rows {
            return Err(ObjectiveError::LabelCount {
                rows,
                labels: labels.len(),
            });
        }
        let n = rows / 2;
        for i in 0..n {
            if labels[i] != labels[i + n] {
                return Err(ObjectiveError::UnpairedLabels {
                    view: i + n,
                    origin: i,
                    expected: labels[i],
                    got: labels[i + n],
                });
            }
        }
        Ok(Self { reps, labels })
    }

    /// Stacks originals over views; views inherit the originals' labels.
    pub fn from_views(originals: &Tensor, views: &Tensor, labels: &[usize]) -> Result<Self> {
        let reps = Tensor::concat_rows(&[originals.clone(), views.clone()])?;
        let all = labels.iter().chain(labels).copied().collect();
        Self::new(reps, all)
    }

    pub fn reps(&self) -> &Tensor {
        &self.reps
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `P_i = {k ≠ i : y_k = y_i}`.
    pub fn positives(&self, i: usize) -> Vec<usize> {
        positive_set(&self.labels, i)
    }

    /// Anchors with a non-empty positive set.
    pub fn active_anchors(&self) -> usize {
        (0..self.len()).filter(|&i| !self.positives(i).is_empty()).count()
    }
}

fn positive_set(labels: &[usize], i: usize) -> Vec<usize> {
    (0..labels.len())
        .filter(|&k| k != i && labels[k] == labels[i])
        .collect()
}

/// Mean of `-ln max(p[y], PROB_FLOOR)` over rows.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<Tensor> {
    check_labels(labels, probs.rows(), probs.cols())?;
    Ok(probs.pick(labels)?.log_clamped(PROB_FLOOR).mean().neg())
}

/// Same loss evaluated from logits through a stable log-softmax.
pub fn cross_entropy_from_logits(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    check_labels(labels, logits.rows(), logits.cols())?;
    Ok(logits.log_softmax_rows().pick(labels)?.mean().neg())
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(ObjectiveError::LabelCount {
            rows,
            labels: labels.len(),
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(ObjectiveError::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Shared kernel. Returns the per-anchor column
/// `-Σ_j weight[i][j] · log_softmax_{k≠i}(sim_ik/τ + log_ratio_ik)[j]`.
fn contrast_terms(
    reps: &Tensor,
    positive_weights: Vec<f64>,
    log_ratio: Option<&Tensor>,
    tau: f64,
) -> Result<Tensor> {
    check_tau(tau)?;
    let rows = reps.rows();
    if rows < 2 {
        return Err(ObjectiveError::TooFewRows(rows));
    }
    let mut logits = cosine_similarity_matrix(reps)?.scale(1.0 / tau);
    if let Some(r) = log_ratio {
        logits = logits.add(r)?;
    }
    let include: Vec<bool> = (0..rows * rows).map(|idx| idx / rows != idx % rows).collect();
    let weights = Tensor::constant(Shape::new(rows, rows), positive_weights)?;
    Ok(logits
        .log_softmax_masked(&include)?
        .mul(&weights)?
        .sum_axis(Axis::Cols)
        .neg())
}

fn label_weights(labels: &[usize]) -> Vec<f64> {
    let n = labels.len();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        let pos = positive_set(labels, i);
        let share = 1.0 / pos.len().max(1) as f64;
        for j in pos {
            w[i * n + j] = share;
        }
    }
    w
}

/// Per-anchor supervised NTXent terms, `2N x 1`. Anchors without
/// positives contribute 0.
pub fn ntxent_terms(batch: &ContrastBatch, tau: f64) -> Result<Tensor> {
    contrast_terms(batch.reps(), label_weights(batch.labels()), None, tau)
}

/// Supervised NTXent summed over all anchors.
pub fn ntxent(batch: &ContrastBatch, tau: f64) -> Result<Tensor> {
    Ok(ntxent_terms(batch, tau)?.sum())
}

/// Per-anchor InfoNCE terms, `2N x 1`; row `i` pairs with `(i + N) mod 2N`.
/// Rows that do not anchor are 0.
pub fn infonce_terms(z: &Tensor, tau: f64, anchors: InfoNceAnchors) -> Result<Tensor> {
    let rows = z.rows();
    if rows < 2 {
        return Err(ObjectiveError::TooFewRows(rows));
    }
    if rows % 2 != 0 {
        return Err(ObjectiveError::OddRows(rows));
    }
    let n = rows / 2;
    let mut w = vec![0.0; rows * rows];
    let anchor_rows = match anchors {
        InfoNceAnchors::Both => rows,
        InfoNceAnchors::OriginalsOnly => n,
    };
    for i in 0..anchor_rows {
        w[i * rows + (i + n) % rows] = 1.0;
    }
    contrast_terms(z, w, None, tau)
}

/// InfoNCE averaged over anchoring rows.
pub fn infonce(z: &Tensor, tau: f64, anchors: InfoNceAnchors) -> Result<Tensor> {
    let count = match anchors {
        InfoNceAnchors::Both => z.rows(),
        InfoNceAnchors::OriginalsOnly => z.rows() / 2,
    };
    Ok(infonce_terms(z, tau, anchors)?.sum().scale(1.0 / count as f64))
}

/// Per-anchor label-aware terms, `2N x 1`.
///
/// Each anchor's fraction is divided through by `w[i][y_i]`, so the
/// kernel sees `sim/τ + ln(w[i][y_k] / w[i][y_i])`; uniform weights give a
/// ratio of exactly 1 and reproduce [`ntxent_terms`] bit for bit.
pub fn lcl_terms(batch: &ContrastBatch, weights: &Tensor, tau: f64) -> Result<Tensor> {
    let rows = batch.len();
    if weights.rows() != rows {
        return Err(ObjectiveError::LabelCount {
            rows: weights.rows(),
            labels: rows,
        });
    }
    let classes = weights.cols();
    check_labels(batch.labels(), rows, classes)?;
    for (idx, &value) in weights.values().iter().enumerate() {
        if !(value > 0.0) {
            return Err(ObjectiveError::NonPositiveWeight {
                row: idx / classes,
                col: idx % classes,
                value,
            });
        }
    }
    let mut one_hot = vec![0.0; rows * classes];
    for (k, &y) in batch.labels().iter().enumerate() {
        one_hot[k * classes + y] = 1.0;
    }
    let one_hot = Tensor::constant(Shape::new(rows, classes), one_hot)?;
    let log_w = weights.log();
    // [i][k] = ln w[i][y_k]
    let by_candidate = log_w.matmul_nt(&one_hot)?;
    // [i] = ln w[i][y_i], broadcast across columns
    let own = log_w
        .pick(batch.labels())?
        .matmul(&Tensor::constant(Shape::new(1, rows), vec![1.0; rows])?)?;
    let log_ratio = by_candidate.sub(&own)?;
    contrast_terms(batch.reps(), label_weights(batch.labels()), Some(&log_ratio), tau)
}

/// Label-aware weighted NTXent summed over anchors.
pub fn lcl_loss(batch: &ContrastBatch, weights: &Tensor, tau: f64) -> Result<Tensor> {
    Ok(lcl_terms(batch, weights, tau)?.sum())
}

/// Constituent losses of one training step.
#[derive(Debug, Clone, Default)]
pub struct LossTerms {
    /// Clean cross-entropy of the main encoder.
    pub ce: Option<Tensor>,
    /// Cross-entropy on the adversarial view (CAT / TACT).
    pub ce_perturbed: Option<Tensor>,
    pub ntxent: Option<Tensor>,
    pub infonce: Option<Tensor>,
    /// Cross-entropy of the weighting network.
    pub weighting_ce: Option<Tensor>,
    pub lcl: Option<Tensor>,
}

fn need<'a>(term: &'a Option<Tensor>, method: Method, name: &'static str) -> Result<&'a Tensor> {
    term.as_ref()
        .ok_or(ObjectiveError::MissingTerm { method, term: name })
}

/// Final objective per method:
///
/// * CE: `L_CE`
/// * SCL: `(1-λ) L_CE + λ L_NTX`
/// * CAT, TACT: `(1-λ)/2 (L_CE + L_CE_perturbed) + λ L_InfoNCE`
/// * LCL, TLCL: `(1-λ)(L_E + L_w) + λ L_f`
///
/// With `λ = 0` the contrastive term is not required and not added.
pub fn combine(method: Method, lambda: f64, terms: &LossTerms) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(ObjectiveError::LambdaOutOfRange(lambda));
    }
    let ce = need(&terms.ce, method, "cross-entropy")?;
    let (supervised, contrastive) = match method {
        Method::Ce => return Ok(ce.clone()),
        Method::Scl => (ce.scale(1.0 - lambda), (lambda > 0.0).then(|| need(&terms.ntxent, method, "ntxent")).transpose()?),
        Method::Cat | Method::Tact => {
            let perturbed = need(&terms.ce_perturbed, method, "perturbed cross-entropy")?;
            (
                ce.add(perturbed)?.scale((1.0 - lambda) / 2.0),
                (lambda > 0.0).then(|| need(&terms.infonce, method, "infonce")).transpose()?,
            )
        }
        Method::Lcl | Method::Tlcl => {
            let weighting = need(&terms.weighting_ce, method, "weighting-network cross-entropy")?;
            (
                ce.add(weighting)?.scale(1.0 - lambda),
                (lambda > 0.0).then(|| need(&terms.lcl, method, "label-aware contrastive")).transpose()?,
            )
        }
    };
    match contrastive {
        Some(c) => Ok(supervised.add(&c.scale(lambda))?),
        None => Ok(supervised),
    }
}
