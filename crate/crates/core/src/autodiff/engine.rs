use std::collections::{HashMap, HashSet};

use super::ops::backward_rule;
use super::tensor::Tensor;
use super::{AutodiffError, Result};

/// Gradients of one scalar root with respect to every reachable node.
pub struct Gradients {
    by_node: HashMap<usize, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, t: &Tensor) -> Option<&[f64]> {
        self.by_node.get(&t.node_id()).map(Vec::as_slice)
    }

    /// Runs an isolated reverse pass from `root`.
    pub fn compute(root: &Tensor) -> Result<Self> {
        if !root.shape().is_scalar() {
            return Err(AutodiffError::NonScalarRoot(root.shape()));
        }
        let order = topological_order(root);
        let mut by_node: HashMap<usize, Vec<f64>> = HashMap::with_capacity(order.len());
        if root.requires_grad() {
            by_node.insert(root.node_id(), vec![1.0]);
        }
        for t in order.iter().rev() {
            if t.is_leaf() {
                continue;
            }
            let Some(g) = by_node.get(&t.node_id()).cloned() else {
                continue;
            };
            let parent_grads = backward_rule(&t.0, &g);
            for (parent, pg) in t.0.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                match by_node.get_mut(&parent.node_id()) {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, d)| *a += d),
                    None => {
                        by_node.insert(parent.node_id(), pg);
                    }
                }
            }
        }
        Ok(Self { by_node })
    }
}

/// Post-order over nodes that require grad; parents precede children.
fn topological_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut seen = HashSet::new();
    if !root.requires_grad() {
        return order;
    }
    let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !seen.insert(t.node_id()) {
            continue;
        }
        stack.push((t.clone(), true));
        for p in t.0.parents.iter().rev() {
            if p.requires_grad() && !seen.contains(&p.node_id()) {
                stack.push((p.clone(), false));
            }
        }
    }
    order
}

/// Accumulates `∂root/∂leaf` into every reachable trainable leaf.
///
/// Calling it twice without [`Tensor::zero_grad`] adds the gradients twice.
pub fn backward(root: &Tensor) -> Result<()> {
    let grads = Gradients::compute(root)?;
    for t in topological_order(root) {
        if t.is_leaf() {
            if let Some(g) = grads.get(&t) {
                t.accumulate_grad(g);
            }
        }
    }
    Ok(())
}

/// `∂root/∂target` as a constant tensor, leaving leaf accumulators untouched.
pub fn grad_wrt(root: &Tensor, target: &Tensor) -> Result<Tensor> {
    let grads = Gradients::compute(root)?;
    let g = grads.get(target).ok_or(AutodiffError::Unreachable)?;
    Tensor::constant(target.shape(), g.to_vec())
}
