use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autodiff::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter tensor plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_tensors(config: AdamConfig, params: &[Tensor]) -> Self {
        let sizes: Vec<usize> = params.iter().map(Tensor::len).collect();
        Self::new(config, &sizes)
    }

    fn check(&self, params: &[&mut [f64]], grads: &[&[f64]]) -> Result<(), TrainError> {
        let mismatch = |what: String| Err(TrainError::OptimizerShape(what));
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return mismatch(format!(
                "{} params and {} grads for {} moment tensors",
                params.len(),
                grads.len(),
                self.m.len()
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return mismatch(format!(
                    "tensor {i}: {} values, {} grads, {} moments",
                    p.len(),
                    g.len(),
                    self.m[i].len()
                ));
            }
            if let Some(j) = g.iter().position(|x| !x.is_finite()) {
                return Err(TrainError::NonFiniteGradient {
                    tensor: i,
                    index: j,
                    value: g[j],
                });
            }
        }
        Ok(())
    }
}

/// One bias-corrected Adam update. Every gradient is checked before any
/// parameter or moment is written, so a non-finite gradient leaves the
/// state untouched.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut AdamState,
    lr: f64,
) -> Result<(), TrainError> {
    state.check(params, grads)?;
    let AdamConfig { beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.len() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Applies [`adam_step`] to the accumulated gradients of `params`.
pub fn adam_update(params: &[Tensor], state: &mut AdamState, lr: f64) -> Result<(), TrainError> {
    let grads: Vec<Vec<f64>> = params.iter().map(Tensor::grad).collect();
    let mut values: Vec<_> = params.iter().map(Tensor::values_mut).collect();
    let mut slices: Vec<&mut [f64]> = values.iter_mut().map(|v| v.as_mut_slice()).collect();
    let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
    adam_step(&mut slices, &grad_refs, state, lr)
}
