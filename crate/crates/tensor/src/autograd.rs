//! Reverse-mode traversal.
//!
//! Op outputs carry strictly larger ids than their inputs, so ordering the
//! reachable nodes by id is a valid topological order of the recorded graph.

use std::collections::{HashMap, HashSet};

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Ordered record of the differentiable ops reachable from a loss.
pub struct Tape {
    nodes: Vec<Tensor>,
}

impl Tape {
    /// Collects every tape participant reachable from `root`, each exactly once,
    /// in topological order.
    pub fn record(root: &Tensor) -> Self {
        let mut seen = HashSet::new();
        let mut nodes = Vec::new();
        let mut stack = vec![root.clone()];
        while let Some(t) = stack.pop() {
            if !t.requires_grad() || !seen.insert(t.id()) {
                continue;
            }
            if let Some(node) = t.node() {
                stack.extend(node.inputs.iter().filter(|i| i.requires_grad()).cloned());
            }
            nodes.push(t);
        }
        nodes.sort_by_key(Tensor::id);
        Tape { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Names of the recorded ops in execution order (leaves report `"leaf"`).
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes
            .iter()
            .map(|t| t.node().map_or("leaf", |n| n.name))
            .collect()
    }

    fn run(&self, root: &Tensor) -> Result<()> {
        let mut pending: HashMap<u64, Vec<f64>> = HashMap::new();
        pending.insert(root.id(), vec![1.0]);
        for t in self.nodes.iter().rev() {
            let Some(grad) = pending.remove(&t.id()) else {
                continue;
            };
            let Some(node) = t.node() else {
                t.accumulate_grad(&grad);
                continue;
            };
            let input_grads = (node.backward)(&grad, t.data(), &node.inputs)?;
            for (input, g) in node.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                if !input.requires_grad() {
                    continue;
                }
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(TensorError::NonFinite { op: node.name });
                }
                debug_assert_eq!(g.len(), input.numel(), "grad size for {}", node.name);
                match pending.get_mut(&input.id()) {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => {
                        pending.insert(input.id(), g);
                    }
                }
            }
        }
        Ok(())
    }
}

impl Tensor {
    /// Accumulates d(self)/d(leaf) into every trainable leaf reachable from
    /// this scalar. Repeated calls add to existing gradients.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Err(TensorError::NoGradient);
        }
        Tape::record(self).run(self)
    }
}
