//! Non-spiking layers: time-distributed dense, gated recurrent readout and
//! dropout.
//!
//! Every layer works on a single sequence laid out as `[T × features]` and
//! receives its parameters as tape variables bound by the caller, in the
//! order returned by `parameters()`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
    /// Softmax over the feature axis of each timestep.
    Softmax,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Softmax => tape.softmax(x, 1),
        }
    }
}

/// Glorot/Xavier uniform initialization for a `[fan_in × fan_out]` matrix.
pub fn glorot_uniform<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as Scalar).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("positive fan sizes")
}

fn expect_params(op: &'static str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::InvalidShape {
            op,
            msg: format!("expected {want} bound parameters, got {got}"),
        });
    }
    Ok(())
}

/// Fully connected layer applied independently to every timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// `[in × out]`
    pub weights: Tensor,
    /// `[1 × out]`
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new<R: Rng>(rng: &mut R, inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weights: glorot_uniform(rng, inputs, outputs),
            bias: Tensor::zeros(&[1, outputs]),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        vec![&self.weights, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weights, &mut self.bias]
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// `activation(x · W + b)` for `x` of shape `[T × in]`.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        expect_params("dense", params.len(), 2)?;
        let (steps, _) = tape.value(x).dims2("dense")?;
        let projected = tape.matmul(x, params[0])?;
        let bias = tape.repeat_rows(params[1], steps)?;
        let pre = tape.add(projected, bias)?;
        self.activation.apply(tape, pre)
    }
}

/// LSTM readout returning the full hidden sequence.
///
/// Gate blocks are packed along the last axis in the order input, forget,
/// candidate, output:
///
/// ```text
/// z_t = x_t·W + h_{t−1}·U + b
/// c_t = σ(z_f) ⊙ c_{t−1} + σ(z_i) ⊙ tanh(z_g)
/// h_t = σ(z_o) ⊙ tanh(c_t)
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentLayer {
    /// `[in × 4H]`
    pub input_weights: Tensor,
    /// `[H × 4H]`
    pub recurrent_weights: Tensor,
    /// `[1 × 4H]`
    pub bias: Tensor,
}

impl RecurrentLayer {
    pub fn new<R: Rng>(rng: &mut R, inputs: usize, hidden: usize) -> Self {
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].fill(1.0);
        Self {
            input_weights: glorot_uniform(rng, inputs, 4 * hidden),
            recurrent_weights: glorot_uniform(rng, hidden, 4 * hidden),
            bias: Tensor::row(bias),
        }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            input_weights: Tensor::zeros(&[inputs, 4 * hidden]),
            recurrent_weights: Tensor::zeros(&[hidden, 4 * hidden]),
            bias: Tensor::zeros(&[1, 4 * hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.recurrent_weights.shape()[0]
    }

    pub fn inputs(&self) -> usize {
        self.input_weights.shape()[0]
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        vec![&self.input_weights, &self.recurrent_weights, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.input_weights,
            &mut self.recurrent_weights,
            &mut self.bias,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.input_weights.len() + self.recurrent_weights.len() + self.bias.len()
    }

    /// Runs over `x` (`[T × in]`) from zero state; returns `[T × H]`.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        expect_params("recurrent", params.len(), 3)?;
        let (steps, _) = tape.value(x).dims2("recurrent")?;
        let h_size = self.hidden();
        let projected = tape.matmul(x, params[0])?;
        let bias = tape.repeat_rows(params[2], steps)?;
        let projected = tape.add(projected, bias)?;

        let mut hidden: Option<Var> = None;
        let mut cell: Option<Var> = None;
        let mut outputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut z = tape.slice(projected, 0, t, 1)?;
            if let Some(h) = hidden {
                let rec = tape.matmul(h, params[1])?;
                z = tape.add(z, rec)?;
            }
            let zi = tape.slice(z, 1, 0, h_size)?;
            let zf = tape.slice(z, 1, h_size, h_size)?;
            let zg = tape.slice(z, 1, 2 * h_size, h_size)?;
            let zo = tape.slice(z, 1, 3 * h_size, h_size)?;
            let input_gate = tape.sigmoid(zi)?;
            let candidate = tape.tanh(zg)?;
            let output_gate = tape.sigmoid(zo)?;
            let write = tape.mul(input_gate, candidate)?;
            let c = match cell {
                Some(prev) => {
                    let forget_gate = tape.sigmoid(zf)?;
                    let kept = tape.mul(forget_gate, prev)?;
                    tape.add(kept, write)?
                }
                None => write,
            };
            let squashed = tape.tanh(c)?;
            let h = tape.mul(output_gate, squashed)?;
            outputs.push(h);
            hidden = Some(h);
            cell = Some(c);
        }
        tape.concat(&outputs, 0)
    }
}

/// Inverted dropout: survivors are scaled by `1/(1 − rate)` during training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutLayer {
    pub rate: Scalar,
}

impl DropoutLayer {
    pub fn new(rate: Scalar) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidParameter(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(Self { rate })
    }

    /// Identity when `rng` is `None` (evaluation) or the rate is zero.
    pub fn forward<R: Rng>(&self, tape: &mut Tape, x: Var, rng: Option<&mut R>) -> Result<Var> {
        let Some(rng) = rng else {
            return Ok(x);
        };
        if self.rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - self.rate);
        let shape = tape.value(x).shape().to_vec();
        let n = tape.value(x).len();
        let mask: Vec<Scalar> = (0..n)
            .map(|_| if rng.gen::<Scalar>() < self.rate { 0.0 } else { keep })
            .collect();
        let mask = tape.constant(Tensor::new(shape, mask)?);
        tape.mul(x, mask)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn bind(tape: &mut Tape, params: Vec<&Tensor>) -> Vec<Var> {
        params.into_iter().map(|p| tape.leaf(p.clone())).collect()
    }

    #[test]
    fn dense_parameter_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(DenseLayer::new(&mut rng, 1200, 1200, Activation::Identity).parameter_count(), 1_441_200);
        assert_eq!(DenseLayer::new(&mut rng, 30, 30, Activation::Identity).parameter_count(), 930);
        assert_eq!(DenseLayer::new(&mut rng, 30, 10, Activation::Softmax).parameter_count(), 310);
    }

    #[test]
    fn recurrent_parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(RecurrentLayer::new(&mut rng, 1200, 30).parameter_count(), 147_720);
    }

    #[test]
    fn dense_output_shape_replaces_last_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = DenseLayer::new(&mut rng, 4, 3, Activation::Softmax);
        let mut tape = Tape::new();
        let params = bind(&mut tape, layer.parameters());
        let x = tape.constant(Tensor::ones(&[5, 4]));
        let y = layer.forward(&mut tape, &params, x).unwrap();
        assert_eq!(tape.value(y).shape(), &[5, 3]);
        for row in tape.value(y).data().chunks(3) {
            assert!((row.iter().sum::<Scalar>() - 1.0).abs() < 1e-12);
        }
        let wrong = tape.constant(Tensor::ones(&[5, 2]));
        assert!(layer.forward(&mut tape, &params, wrong).is_err());
    }

    #[test]
    fn zero_recurrent_layer_on_zero_input_stays_zero() {
        let layer = RecurrentLayer::zeros(3, 2);
        let mut tape = Tape::new();
        let params = bind(&mut tape, layer.parameters());
        let x = tape.constant(Tensor::zeros(&[6, 3]));
        let h = layer.forward(&mut tape, &params, x).unwrap();
        assert_eq!(tape.value(h), &Tensor::zeros(&[6, 2]));
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = RecurrentLayer::new(&mut rng, 3, 2);
        assert_eq!(layer.bias.data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn dropout_is_identity_at_rate_zero_and_in_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[4, 4]));
        let off = DropoutLayer::new(0.0).unwrap();
        assert_eq!(off.forward(&mut tape, x, Some(&mut rng)).unwrap(), x);
        let on = DropoutLayer::new(0.7).unwrap();
        assert_eq!(on.forward::<ChaCha8Rng>(&mut tape, x, None).unwrap(), x);
        assert!(DropoutLayer::new(1.0).is_err());
    }

    #[test]
    fn dropout_preserves_the_mean() {
        let rate = 0.3;
        let layer = DropoutLayer::new(rate).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[1, 10_000]));
        let y = layer.forward(&mut tape, x, Some(&mut rng)).unwrap();
        let mean = tape.value(y).sum() / 10_000.0;
        // per-element variance of the scaled mask is rate / (1 − rate)
        let sigma = (rate / (1.0 - rate) / 10_000.0).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn dropout_with_fixed_seed_is_reproducible() {
        let layer = DropoutLayer::new(0.5).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::ones(&[3, 5]));
            let y = layer.forward(&mut tape, x, Some(&mut rng)).unwrap();
            tape.value(y).clone()
        };
        assert_eq!(run(), run());
    }
}
