use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A user-supplied backward rule: maps the output cotangent to one cotangent
/// per input, each shaped like that input.
pub trait BackwardRule: Send + Sync {
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, cotangent: &Tensor)
        -> Result<Vec<Tensor>>;
}

pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `input · scale + shift`; the shift does not enter the backward rule.
    Affine { input: Var, scale: Scalar },
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    Exp(Var),
    Log(Var),
    Sigmoid(Var),
    Tanh(Var),
    SumAxis { input: Var, axis: usize },
    SumAll(Var),
    Softmax { input: Var, axis: usize },
    ClampMin { input: Var, min: Scalar },
    /// Heaviside `x > 0` whose derivative is replaced by the constant `slope`.
    Step { input: Var, slope: Scalar },
    Custom { inputs: Vec<Var>, rule: Arc<dyn BackwardRule> },
}

pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) value: Tensor,
    pub(crate) requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A differentiable input (parameter or input of interest).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = self.op_inputs(&op).iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub(crate) fn op_inputs(&self, op: &Op) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => vec![*a, *b],
            Op::Affine { input, .. }
            | Op::Slice { input, .. }
            | Op::SumAxis { input, .. }
            | Op::Softmax { input, .. }
            | Op::ClampMin { input, .. }
            | Op::Step { input, .. } => vec![*input],
            Op::Transpose(a)
            | Op::Reshape(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::SumAll(a) => vec![*a],
            Op::Concat { inputs, .. } | Op::Custom { inputs, .. } => inputs.clone(),
        }
    }

    /// Reverse-mode sweep from a one-element `loss`.
    ///
    /// Does not modify the tape; calling it twice gives identical results.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.len() != 1 {
            return Err(Error::NotScalar(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(loss_value.shape()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(cotangent) = grads[idx].take() else {
                continue;
            };
            if let Op::Slice { input, axis, start } = node.op {
                // Scatter straight into the input's accumulator instead of
                // materializing a mostly-zero full-size cotangent.
                if self.nodes[input.0].requires_grad {
                    if !cotangent.is_finite() {
                        return Err(Error::NonFinite { op: "backward" });
                    }
                    let shape = self.nodes[input.0].value.shape();
                    let acc = grads[input.0].get_or_insert_with(|| Tensor::zeros(shape));
                    acc.add_into_slice(&cotangent, axis, start)?;
                }
                grads[idx] = Some(cotangent);
                continue;
            }
            let contributions = self.input_cotangents(idx, &cotangent)?;
            grads[idx] = Some(cotangent);
            for (input, contribution) in contributions {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                if !contribution.is_finite() {
                    return Err(Error::NonFinite { op: "backward" });
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&contribution)?,
                    slot => *slot = Some(contribution),
                }
            }
        }
        for (node, slot) in self.nodes.iter().zip(grads.iter_mut()) {
            if node.requires_grad && matches!(node.op, Op::Leaf) && slot.is_none() {
                *slot = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }
}

/// Result of [`Tape::backward`]: the accumulated gradient of every node that
/// the loss depends on. Every leaf has an entry, all-zero when the loss does
/// not reach it.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Moves the gradient for `var` out of the map.
    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }

    /// Gradient for `var`; a single zero for intermediate nodes off the
    /// loss path.
    pub fn wrt(&self, var: Var) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::scalar(0.0))
    }
}
