//! Parameter initialisers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Shape, Tensor};

/// `U(-1/√fan_in, 1/√fan_in)`.
pub(crate) fn uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let values = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::param(Shape::new(rows, cols), values).expect("length matches shape")
}

pub(crate) fn normal(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let dist = Normal::new(0.0, std).expect("positive std");
    let values = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::param(Shape::new(rows, cols), values).expect("length matches shape")
}

pub(crate) fn filled(rows: usize, cols: usize, value: f64) -> Tensor {
    Tensor::param(Shape::new(rows, cols), vec![value; rows * cols]).expect("length matches shape")
}
