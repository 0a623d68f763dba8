//! Gradient-descent optimizers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn build(self, learning_rate: Scalar) -> Result<Optimizer> {
        match self {
            OptimizerKind::Sgd => Ok(Optimizer::Sgd(Sgd::new(learning_rate)?)),
            OptimizerKind::Adam => Ok(Optimizer::Adam(Adam::new(learning_rate)?)),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?} (expected sgd or adam)"))),
        }
    }
}

fn check_rate(learning_rate: Scalar) -> Result<()> {
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "learning rate must be positive, got {learning_rate}"
        )));
    }
    Ok(())
}

fn check_grads(params: &[&mut Tensor], grads: &[Tensor]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::InvalidShape {
            op: "optimizer step",
            msg: format!("{} parameters but {} gradients", params.len(), grads.len()),
        });
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "optimizer step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFinite { op: "gradient" });
        }
    }
    Ok(())
}

/// Plain gradient descent: `W ← W − γ·dL/dW`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd {
    pub learning_rate: Scalar,
}

impl Sgd {
    pub fn new(learning_rate: Scalar) -> Result<Self> {
        check_rate(learning_rate)?;
        Ok(Self { learning_rate })
    }

    pub fn step(&mut self, mut params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        check_grads(&params, grads)?;
        for (p, g) in params.iter_mut().zip(grads) {
            for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                *w -= self.learning_rate * d;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: Scalar,
    pub beta1: Scalar,
    pub beta2: Scalar,
    pub epsilon: Scalar,
    step: i32,
    first: Vec<Vec<Scalar>>,
    second: Vec<Vec<Scalar>>,
}

impl Adam {
    pub fn new(learning_rate: Scalar) -> Result<Self> {
        check_rate(learning_rate)?;
        Ok(Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: vec![],
            second: vec![],
        })
    }

    pub fn step(&mut self, mut params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        check_grads(&params, grads)?;
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for (i, (w, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * d;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * d * d;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *w -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Optimizer {
    Sgd(Sgd),
    Adam(Adam),
}

impl Optimizer {
    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        match self {
            Optimizer::Sgd(o) => o.step(params, grads),
            Optimizer::Adam(o) => o.step(params, grads),
        }
    }
}
