//! The two hybrid architectures: a LIF layer feeding an LSTM readout with
//! time-distributed heads.
//!
//! ```text
//! network 1: x[T×D] → LIF (one unit type per channel) → LSTM(30) → dropout
//!            → dense(30) → dropout → softmax(classes)
//! network 2: x[T×D] → dense(D→D) → LIF (per neuron) → same tail
//! ```
//!
//! `T` is the image width and `D = rows·channels`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::layers::{Activation, DenseLayer, DropoutLayer, RecurrentLayer};
use crate::lif::{self, GradientMode, LifParams, LifTrace, SpikeRaster};
use crate::tensor::{Scalar, Tensor};

pub const HIDDEN_UNITS: usize = 30;
pub const DEFAULT_CLASSES: usize = 10;
pub const DEFAULT_DROPOUT: Scalar = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// Per-channel LIF unit types directly on the pixels.
    #[serde(rename = "1")]
    Network1,
    /// Trainable dense projection before per-neuron LIF units.
    #[serde(rename = "2")]
    Network2,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Network1 => "1",
            Architecture::Network2 => "2",
        }
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(Architecture::Network1),
            "2" => Ok(Architecture::Network2),
            other => Err(Error::Config(format!("unknown network {other:?} (expected 1 or 2)"))),
        }
    }
}

/// Image geometry; the sequence fed to a network is `[cols × rows·channels]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageDims {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
}

impl ImageDims {
    pub const DESK: ImageDims = ImageDims::new(32, 40, 3);
    pub const PAPER: ImageDims = ImageDims::new(400, 500, 3);

    pub const fn new(rows: usize, cols: usize, channels: usize) -> Self {
        Self {
            rows,
            cols,
            channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.channels == 0 {
            return Err(Error::InvalidParameter(format!("image dims must be positive, got {self}")));
        }
        Ok(())
    }

    pub fn timesteps(&self) -> usize {
        self.cols
    }

    pub fn features(&self) -> usize {
        self.rows * self.channels
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols * self.channels
    }
}

impl fmt::Display for ImageDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.rows, self.cols, self.channels)
    }
}

impl FromStr for ImageDims {
    type Err = Error;

    /// Parses `ROWSxCOLSxCHANNELS`, e.g. `32x40x3`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split('x').collect();
        let bad = || Error::Config(format!("dims must look like 32x40x3, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let n: Vec<usize> = parts
            .iter()
            .map(|p| p.parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let dims = ImageDims::new(n[0], n[1], n[2]);
        dims.validate().map_err(|_| bad())?;
        Ok(dims)
    }
}

/// Trainable LIF layer. With an expansion matrix, `k` unit types are shared
/// across `D` neurons: neuron `j` uses type `j mod k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LifLayer {
    /// `[1 × k]`
    pub w_input: Tensor,
    /// `[1 × k]`
    pub w_leak: Tensor,
    pub v_thresh: Scalar,
    expansion: Option<Tensor>,
}

impl LifLayer {
    fn new<R: Rng>(rng: &mut R, types: usize, neurons: usize) -> Self {
        let w_input = (0..types).map(|_| rng.gen_range(0.3..0.7)).collect();
        let w_leak = (0..types).map(|_| rng.gen_range(0.05..0.15)).collect();
        let expansion = (types != neurons).then(|| {
            let mut e = Tensor::zeros(&[types, neurons]);
            for j in 0..neurons {
                e.data_mut()[(j % types) * neurons + j] = 1.0;
            }
            e
        });
        Self {
            w_input: Tensor::row(w_input),
            w_leak: Tensor::row(w_leak),
            v_thresh: 1.0,
            expansion,
        }
    }

    pub fn unit_types(&self) -> usize {
        self.w_input.len()
    }

    pub fn neurons(&self) -> usize {
        self.expansion
            .as_ref()
            .map_or(self.unit_types(), |e| e.shape()[1])
    }

    pub fn parameter_count(&self) -> usize {
        self.w_input.len() + self.w_leak.len()
    }

    /// Per-neuron parameters after expanding shared unit types.
    pub fn expanded(&self) -> Result<LifParams> {
        let k = self.unit_types();
        let n = self.neurons();
        let pick = |t: &Tensor| (0..n).map(|j| t.data()[j % k]).collect();
        LifParams::new(pick(&self.w_input), pick(&self.w_leak), self.v_thresh)
    }

    pub fn clamp(&mut self) {
        for v in self.w_input.data_mut() {
            *v = lif::clamp_w_input(*v);
        }
        for v in self.w_leak.data_mut() {
            *v = lif::clamp_w_leak(*v);
        }
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], x: Var, mode: GradientMode) -> Result<LifTrace> {
        let (w_input, w_leak) = match &self.expansion {
            Some(e) => {
                let e = tape.constant(e.clone());
                (tape.matmul(params[0], e)?, tape.matmul(params[1], e)?)
            }
            None => (params[0], params[1]),
        };
        lif::unroll(tape, x, w_input, w_leak, self.v_thresh, mode)
    }
}

/// Tape handles of one forward pass over a single sequence.
pub struct ForwardPass {
    /// `[T × classes]` per-timestep class probabilities.
    pub probs: Var,
    pub lif: LifTrace,
    /// `[T × D]` drive into the LIF layer (the encoded image for network 1).
    pub lif_input: Var,
    /// `[T × 30]` recurrent activations.
    pub hidden: Var,
}

/// Evaluation-mode values of one forward pass, detached from the tape.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    /// LIF raster with membrane trace.
    pub raster: SpikeRaster,
    /// `[T × D]`
    pub lif_input: Tensor,
    /// `[T × 30]`
    pub hidden: Tensor,
    /// `[T × classes]`
    pub probs: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub architecture: Architecture,
    pub dims: ImageDims,
    pub encoder: Option<DenseLayer>,
    pub lif: LifLayer,
    pub readout: RecurrentLayer,
    pub head: DenseLayer,
    pub output: DenseLayer,
    pub dropout: DropoutLayer,
}

/// Network 1 with all initialization drawn from `seed`.
pub fn build_network1(dims: ImageDims, classes: usize, dropout: Scalar, seed: u64) -> Result<Network> {
    Network::new(Architecture::Network1, dims, classes, dropout, seed)
}

/// Network 2 with all initialization drawn from `seed`.
pub fn build_network2(dims: ImageDims, classes: usize, dropout: Scalar, seed: u64) -> Result<Network> {
    Network::new(Architecture::Network2, dims, classes, dropout, seed)
}

impl Network {
    pub fn new(
        architecture: Architecture,
        dims: ImageDims,
        classes: usize,
        dropout: Scalar,
        seed: u64,
    ) -> Result<Self> {
        dims.validate()?;
        if classes < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 classes, got {classes}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = dims.features();
        let (encoder, lif) = match architecture {
            Architecture::Network1 => (None, LifLayer::new(&mut rng, dims.channels, d)),
            Architecture::Network2 => (
                Some(DenseLayer::new(&mut rng, d, d, Activation::Identity)),
                LifLayer::new(&mut rng, d, d),
            ),
        };
        Ok(Self {
            architecture,
            dims,
            encoder,
            lif,
            readout: RecurrentLayer::new(&mut rng, d, HIDDEN_UNITS),
            head: DenseLayer::new(&mut rng, HIDDEN_UNITS, HIDDEN_UNITS, Activation::Identity),
            output: DenseLayer::new(&mut rng, HIDDEN_UNITS, classes, Activation::Softmax),
            dropout: DropoutLayer::new(dropout)?,
        })
    }

    pub fn classes(&self) -> usize {
        self.output.outputs()
    }

    /// Parameter names, in the order of [`parameters`](Self::parameters).
    pub fn parameter_names(&self) -> Vec<&'static str> {
        let mut names = vec![];
        if self.encoder.is_some() {
            names.extend(["encoder.weights", "encoder.bias"]);
        }
        names.extend([
            "lif.w_input",
            "lif.w_leak",
            "readout.input_weights",
            "readout.recurrent_weights",
            "readout.bias",
            "head.weights",
            "head.bias",
            "output.weights",
            "output.bias",
        ]);
        names
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut p = vec![];
        if let Some(enc) = &self.encoder {
            p.extend(enc.parameters());
        }
        p.extend([&self.lif.w_input, &self.lif.w_leak]);
        p.extend(self.readout.parameters());
        p.extend(self.head.parameters());
        p.extend(self.output.parameters());
        p
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = vec![];
        if let Some(enc) = &mut self.encoder {
            p.extend(enc.parameters_mut());
        }
        p.extend([&mut self.lif.w_input, &mut self.lif.w_leak]);
        p.extend(self.readout.parameters_mut());
        p.extend(self.head.parameters_mut());
        p.extend(self.output.parameters_mut());
        p
    }

    /// Number of leading entries of [`parameters`](Self::parameters) that sit
    /// at or below the LIF layer.
    pub fn spiking_block_len(&self) -> usize {
        if self.encoder.is_some() {
            4
        } else {
            2
        }
    }

    /// `(layer, trainable parameter count)` rows in forward order.
    pub fn summary(&self) -> Vec<(&'static str, usize)> {
        let mut rows = vec![];
        if let Some(enc) = &self.encoder {
            rows.push(("time-distributed dense", enc.parameter_count()));
        }
        rows.extend([
            ("lif", self.lif.parameter_count()),
            ("lstm", self.readout.parameter_count()),
            ("time-distributed dense", self.head.parameter_count()),
            ("softmax", self.output.parameter_count()),
        ]);
        rows
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Projects LIF parameters back into their feasible region.
    pub fn clamp_lif(&mut self) {
        self.lif.clamp();
    }

    /// Rounds every parameter to single precision, the width of the
    /// checkpoint payload, so a saved network reloads bit-for-bit.
    pub fn round_to_storage_precision(&mut self) {
        for p in self.parameters_mut() {
            for v in p.data_mut() {
                *v = *v as f32 as Scalar;
            }
        }
    }

    /// Replaces parameter values in order, checking shapes.
    pub fn set_parameters(&mut self, values: &[Tensor]) -> Result<()> {
        let mut slots = self.parameters_mut();
        if values.len() != slots.len() {
            return Err(Error::InvalidShape {
                op: "set_parameters",
                msg: format!("expected {} tensors, got {}", slots.len(), values.len()),
            });
        }
        for (slot, value) in slots.iter_mut().zip(values) {
            if slot.shape() != value.shape() {
                return Err(Error::ShapeMismatch {
                    op: "set_parameters",
                    lhs: slot.shape().to_vec(),
                    rhs: value.shape().to_vec(),
                });
            }
            **slot = value.clone();
        }
        Ok(())
    }

    /// Binds every parameter as a tape leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.parameters().into_iter().map(|t| tape.leaf(t.clone())).collect()
    }

    /// Binds every parameter as a constant (no gradients are tracked).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Vec<Var> {
        self.parameters()
            .into_iter()
            .map(|t| tape.constant(t.clone()))
            .collect()
    }

    /// Runs `x` in evaluation mode and keeps every intermediate value.
    pub fn record(&self, x: &Tensor) -> Result<Recording> {
        let mut tape = Tape::new();
        let params = self.bind_frozen(&mut tape);
        let pass = self.forward::<ChaCha8Rng>(&mut tape, &params, x, GradientMode::Disabled, None)?;
        Ok(Recording {
            raster: SpikeRaster::from_tape(&tape, &pass.lif, true)?,
            lif_input: tape.value(pass.lif_input).clone(),
            hidden: tape.value(pass.hidden).clone(),
            probs: tape.value(pass.probs).clone(),
        })
    }

    /// Forward pass over one encoded sequence `x` of shape `[T × D]`.
    /// Dropout is active only when `rng` is given.
    pub fn forward<R: Rng>(
        &self,
        tape: &mut Tape,
        params: &[Var],
        x: &Tensor,
        mode: GradientMode,
        mut rng: Option<&mut R>,
    ) -> Result<ForwardPass> {
        let want = [self.dims.timesteps(), self.dims.features()];
        if x.shape() != want {
            return Err(Error::ShapeMismatch {
                op: "network input",
                lhs: want.to_vec(),
                rhs: x.shape().to_vec(),
            });
        }
        if params.len() != self.parameters().len() {
            return Err(Error::InvalidShape {
                op: "network",
                msg: format!("expected {} bound parameters, got {}", self.parameters().len(), params.len()),
            });
        }
        let x = tape.constant(x.clone());
        let mut offset = 0;
        let lif_input = match &self.encoder {
            Some(enc) => {
                offset = 2;
                enc.forward(tape, &params[..2], x)?
            }
            None => x,
        };
        let trace = self.lif.forward(tape, &params[offset..offset + 2], lif_input, mode)?;
        offset += 2;
        let hidden = self.readout.forward(tape, &params[offset..offset + 3], trace.spikes)?;
        offset += 3;
        let h = self.dropout.forward(tape, hidden, rng.as_deref_mut())?;
        let h = self.head.forward(tape, &params[offset..offset + 2], h)?;
        offset += 2;
        let h = self.dropout.forward(tape, h, rng.as_deref_mut())?;
        let probs = self.output.forward(tape, &params[offset..offset + 2], h)?;
        Ok(ForwardPass {
            probs,
            lif: trace,
            lif_input,
            hidden,
        })
    }
}
