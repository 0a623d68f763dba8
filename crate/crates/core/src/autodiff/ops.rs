use std::sync::Arc;

use super::tape::{BackwardRule, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

fn sigmoid(v: Scalar) -> Scalar {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        self.push(Op::Add(a, b), value, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        self.push(Op::Sub(a, b), value, "sub")
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        self.push(Op::Mul(a, b), value, "mul")
    }

    /// `a · scale + shift` with constant scalars.
    pub fn affine(&mut self, a: Var, scale: Scalar, shift: Scalar) -> Result<Var> {
        let value = self.value(a).map(|x| x * scale + shift);
        self.push(Op::Affine { input: a, scale }, value, "affine")
    }

    pub fn scale(&mut self, a: Var, factor: Scalar) -> Result<Var> {
        let value = self.value(a).map(|x| x * factor);
        self.push(Op::Affine { input: a, scale: factor }, value, "scale")
    }

    pub fn add_scalar(&mut self, a: Var, shift: Scalar) -> Result<Var> {
        let value = self.value(a).map(|x| x + shift);
        self.push(Op::Affine { input: a, scale: 1.0 }, value, "add_scalar")
    }

    /// `c − a` for a constant `c`.
    pub fn rsub_scalar(&mut self, c: Scalar, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| c - x);
        self.push(Op::Affine { input: a, scale: -1.0 }, value, "rsub_scalar")
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul(a, b), value, "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose()?;
        self.push(Op::Transpose(a), value, "transpose")
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        self.push(Op::Reshape(a), value, "reshape")
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let parts: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
        let value = Tensor::concat(&parts, axis)?;
        self.push(
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            value,
            "concat",
        )
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let value = self.value(a).slice(axis, start, len)?;
        self.push(Op::Slice { input: a, axis, start }, value, "slice")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(Scalar::exp);
        self.push(Op::Exp(a), value, "exp")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(Scalar::ln);
        self.push(Op::Log(a), value, "log")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), value, "sigmoid")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(Scalar::tanh);
        self.push(Op::Tanh(a), value, "tanh")
    }

    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let value = self.value(a).sum_axis(axis)?;
        self.push(Op::SumAxis { input: a, axis }, value, "sum_axis")
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let n = *self.value(a).shape().get(axis).ok_or_else(|| Error::InvalidShape {
            op: "mean_axis",
            msg: format!("axis {axis} out of range for shape {:?}", self.value(a).shape()),
        })?;
        let total = self.sum_axis(a, axis)?;
        self.scale(total, 1.0 / n as Scalar)
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(Op::SumAll(a), value, "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        let total = self.sum(a)?;
        self.scale(total, 1.0 / n as Scalar)
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let value = self.value(a).softmax_axis(axis)?;
        self.push(Op::Softmax { input: a, axis }, value, "softmax")
    }

    /// `max(a, min)`; the gradient is blocked where the clamp is active.
    pub fn clamp_min(&mut self, a: Var, min: Scalar) -> Result<Var> {
        let value = self.value(a).map(|x| x.max(min));
        self.push(Op::ClampMin { input: a, min }, value, "clamp_min")
    }

    /// Heaviside step `x > 0` whose backward rule multiplies the cotangent by
    /// `slope` instead of the true (zero) derivative.
    pub fn step(&mut self, a: Var, slope: Scalar) -> Result<Var> {
        let value = self.value(a).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
        self.push(Op::Step { input: a, slope }, value, "step")
    }

    /// Spike generation: forward `x > 0`, backward passes the cotangent
    /// through unchanged.
    pub fn theta1(&mut self, a: Var) -> Result<Var> {
        self.step(a, 1.0)
    }

    /// Potential reset: forward `x > 0`, backward returns zero.
    pub fn theta2(&mut self, a: Var) -> Result<Var> {
        self.step(a, 0.0)
    }

    /// Records an operation whose forward value was computed by the caller
    /// and whose backward is given by `rule`.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        value: Tensor,
        rule: Arc<dyn BackwardRule>,
    ) -> Result<Var> {
        self.push(
            Op::Custom {
                inputs: inputs.to_vec(),
                rule,
            },
            value,
            "custom",
        )
    }

    /// `[rows × 1]` ones times `row`: repeats a `[1 × n]` row `rows` times.
    pub fn repeat_rows(&mut self, row: Var, rows: usize) -> Result<Var> {
        let ones = self.constant(Tensor::ones(&[rows, 1]));
        self.matmul(ones, row)
    }
}
