//! Leaky integrate-and-fire layer.
//!
//! Each neuron integrates its input with the Euler update
//!
//! ```text
//! V_t = w_input · x_t + (1 − w_leak) · V_{t−1} · carry_{t−1}
//! y_t = Θ₁(V_t − V_thresh)
//! ```
//!
//! where `carry_{t−1}` is zero in the step after a spike (reset to zero) and
//! one otherwise. Both step functions compare with strict `>`. On the tape
//! the spike step passes its cotangent through (Θ₁′ = 1) and the reset gate
//! blocks it (Θ₂′ = 0), so gradients reach every input that contributed to a
//! spike but nothing before the previous reset.
//!
//! The potential starts at `V = 0`.

mod gradients;
mod rates;

pub use gradients::{grad_input_closed_form, grad_wleak_closed_form, grad_winput_closed_form};
pub use rates::{
    linspace_step, min_input, simulate_steps_to_spike, steps_to_spike, sweep_rates, RateAnalytics, RateGrid, RateRow, Steps,
};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Bounds applied to trainable LIF parameters after every optimizer step.
pub const W_LEAK_MAX: Scalar = 1.0 - 1e-6;
pub const W_INPUT_MIN: Scalar = 1e-6;

/// Parameters of a single LIF unit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitParams {
    pub w_input: Scalar,
    pub w_leak: Scalar,
    pub v_thresh: Scalar,
}

impl UnitParams {
    pub const fn new(w_input: Scalar, w_leak: Scalar, v_thresh: Scalar) -> Self {
        Self {
            w_input,
            w_leak,
            v_thresh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.w_leak) {
            return Err(Error::InvalidParameter(format!(
                "w_leak must lie in [0, 1), got {}",
                self.w_leak
            )));
        }
        if !(self.v_thresh > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "v_thresh must be positive, got {}",
                self.v_thresh
            )));
        }
        if !self.w_input.is_finite() {
            return Err(Error::InvalidParameter("w_input must be finite".into()));
        }
        Ok(())
    }
}

/// Per-neuron LIF parameters for a layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    pub w_input: Vec<Scalar>,
    pub w_leak: Vec<Scalar>,
    pub v_thresh: Scalar,
}

impl LifParams {
    pub fn new(w_input: Vec<Scalar>, w_leak: Vec<Scalar>, v_thresh: Scalar) -> Result<Self> {
        if w_input.len() != w_leak.len() || w_input.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "w_input has {} entries but w_leak has {}",
                w_input.len(),
                w_leak.len()
            )));
        }
        let params = Self {
            w_input,
            w_leak,
            v_thresh,
        };
        for i in 0..params.neurons() {
            params.unit(i).validate()?;
        }
        Ok(params)
    }

    /// `neurons` identical units.
    pub fn uniform(neurons: usize, unit: UnitParams) -> Result<Self> {
        Self::new(
            vec![unit.w_input; neurons],
            vec![unit.w_leak; neurons],
            unit.v_thresh,
        )
    }

    pub fn neurons(&self) -> usize {
        self.w_input.len()
    }

    pub fn unit(&self, i: usize) -> UnitParams {
        UnitParams::new(self.w_input[i], self.w_leak[i], self.v_thresh)
    }
}

/// Clamps raw parameter values into the trainable feasible region.
pub fn clamp_w_leak(v: Scalar) -> Scalar {
    v.clamp(0.0, W_LEAK_MAX)
}

pub fn clamp_w_input(v: Scalar) -> Scalar {
    v.max(W_INPUT_MIN)
}

/// Membrane parameters of the continuous model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalNeuronParams {
    /// Membrane resistance.
    pub r_m: Scalar,
    /// Membrane capacity.
    pub c_m: Scalar,
    /// Euler timestep.
    pub dt: Scalar,
}

impl PhysicalNeuronParams {
    /// Folds the Euler step into `w_input = Δt/C` and `w_leak = Δt/(R·C)`,
    /// with the threshold fixed at 1.
    pub fn to_update_params(&self) -> Result<UnitParams> {
        if !(self.r_m > 0.0 && self.c_m > 0.0 && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "r_m, c_m and dt must be positive, got {self:?}"
            )));
        }
        let w_input = self.dt / self.c_m;
        let w_leak = self.dt / (self.r_m * self.c_m);
        if w_leak >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "timestep too large for stable Euler decay (w_leak = {w_leak})"
            )));
        }
        Ok(UnitParams::new(w_input, w_leak, 1.0))
    }
}

/// How the spike step is differentiated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Θ₁′ = 1: errors pass the spike into the potential.
    Surrogate,
    /// Θ₁′ = 0: the true derivative of a step; nothing passes the layer.
    Disabled,
}

impl GradientMode {
    pub fn spike_slope(self) -> Scalar {
        match self {
            GradientMode::Surrogate => 1.0,
            GradientMode::Disabled => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GradientMode::Surrogate => "surrogate",
            GradientMode::Disabled => "disabled",
        }
    }
}

impl std::str::FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "surrogate" => Ok(GradientMode::Surrogate),
            "disabled" => Ok(GradientMode::Disabled),
            other => Err(Error::Config(format!(
                "unknown gradient mode {other:?} (expected surrogate or disabled)"
            ))),
        }
    }
}

/// Tape handles produced by [`unroll`].
pub struct LifTrace {
    /// `[T × N]` spikes as 0.0/1.0.
    pub spikes: Var,
    /// One `[1 × N]` potential per step.
    pub potentials: Vec<Var>,
}

/// Unrolls the LIF recurrence over the rows of `x` (`[T × N]`, one row per
/// timestep) on the tape. `w_input` and `w_leak` are `[1 × N]` rows.
pub fn unroll(
    tape: &mut Tape,
    x: Var,
    w_input: Var,
    w_leak: Var,
    v_thresh: Scalar,
    mode: GradientMode,
) -> Result<LifTrace> {
    let (steps, neurons) = tape.value(x).dims2("lif")?;
    for (name, w) in [("w_input", w_input), ("w_leak", w_leak)] {
        if tape.value(w).shape() != [1, neurons] {
            return Err(Error::ShapeMismatch {
                op: if name == "w_input" { "lif w_input" } else { "lif w_leak" },
                lhs: tape.value(w).shape().to_vec(),
                rhs: vec![1, neurons],
            });
        }
    }

    let decay = tape.rsub_scalar(1.0, w_leak)?;
    let mut potentials = Vec::with_capacity(steps);
    let mut spikes = Vec::with_capacity(steps);
    let mut carried: Option<Var> = None;

    for t in 0..steps {
        let x_t = tape.slice(x, 0, t, 1)?;
        let drive = tape.mul(w_input, x_t)?;
        let v = match carried {
            Some(prev) => tape.add(drive, prev)?,
            None => drive,
        };
        let over = tape.add_scalar(v, -v_thresh)?;
        let spike = tape.step(over, mode.spike_slope())?;
        // carry = 1 − Θ₂(V − V_thresh): zero exactly when this step spiked.
        let fired = tape.theta2(over)?;
        let carry = tape.rsub_scalar(1.0, fired)?;
        let leaked = tape.mul(decay, v)?;
        carried = Some(tape.mul(leaked, carry)?);
        potentials.push(v);
        spikes.push(spike);
    }
    let spikes = tape.concat(&spikes, 0)?;
    Ok(LifTrace { spikes, potentials })
}

/// Spike output of a LIF layer for one input sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeRaster {
    pub neurons: usize,
    pub timesteps: usize,
    /// Neuron-major: `spikes[i * timesteps + t]`.
    pub spikes: Vec<bool>,
    /// Membrane potentials in the same layout, when recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<Scalar>>,
}

impl SpikeRaster {
    /// Builds a raster from a `[T × N]` 0/1 tensor and optional `[1 × N]`
    /// potentials per step.
    pub fn from_tape(tape: &Tape, lif: &LifTrace, record_trace: bool) -> Result<Self> {
        let values = tape.value(lif.spikes);
        let (timesteps, neurons) = values.dims2("raster")?;
        let mut spikes = vec![false; neurons * timesteps];
        for t in 0..timesteps {
            for i in 0..neurons {
                spikes[i * timesteps + t] = values.data()[t * neurons + i] > 0.5;
            }
        }
        let trace = record_trace.then(|| {
            let mut trace = vec![0.0; neurons * timesteps];
            for (t, v) in lif.potentials.iter().enumerate() {
                for (i, &p) in tape.value(*v).data().iter().enumerate() {
                    trace[i * timesteps + t] = p;
                }
            }
            trace
        });
        Ok(Self {
            neurons,
            timesteps,
            spikes,
            trace,
        })
    }

    pub fn get(&self, neuron: usize, t: usize) -> bool {
        self.spikes[neuron * self.timesteps + t]
    }

    pub fn neuron(&self, neuron: usize) -> &[bool] {
        &self.spikes[neuron * self.timesteps..(neuron + 1) * self.timesteps]
    }

    pub fn potential(&self, neuron: usize, t: usize) -> Option<Scalar> {
        self.trace.as_ref().map(|tr| tr[neuron * self.timesteps + t])
    }

    /// Fraction of (neuron, step) cells that spiked.
    pub fn density(&self) -> Scalar {
        self.spike_count() as Scalar / self.spikes.len() as Scalar
    }

    pub fn spike_count(&self) -> usize {
        self.spikes.iter().filter(|&&s| s).count()
    }

    /// Step indices at which `neuron` spiked.
    pub fn spike_times(&self, neuron: usize) -> Vec<usize> {
        self.neuron(neuron)
            .iter()
            .enumerate()
            .filter_map(|(t, &s)| s.then_some(t))
            .collect()
    }
}

/// Runs the layer on a batch `[B × T × N]` and returns one raster per item.
pub fn lif_forward(x: &Tensor, params: &LifParams, record_trace: bool) -> Result<Vec<SpikeRaster>> {
    let (batch, steps, neurons) = match x.shape() {
        &[b, t, n] => (b, t, n),
        other => {
            return Err(Error::InvalidShape {
                op: "lif_forward",
                msg: format!("expected [batch × timesteps × neurons], got {other:?}"),
            })
        }
    };
    if neurons != params.neurons() {
        return Err(Error::ShapeMismatch {
            op: "lif_forward",
            lhs: x.shape().to_vec(),
            rhs: vec![params.neurons()],
        });
    }
    if !x.is_finite() {
        return Err(Error::NonFinite { op: "lif_forward input" });
    }
    let item = steps * neurons;
    (0..batch)
        .map(|b| {
            let mut tape = Tape::new();
            let seq = Tensor::new(vec![steps, neurons], x.data()[b * item..(b + 1) * item].to_vec())?;
            let xv = tape.constant(seq);
            let wi = tape.constant(Tensor::row(params.w_input.clone()));
            let wl = tape.constant(Tensor::row(params.w_leak.clone()));
            let lif = unroll(&mut tape, xv, wi, wl, params.v_thresh, GradientMode::Surrogate)?;
            SpikeRaster::from_tape(&tape, &lif, record_trace)
        })
        .collect()
}

/// Potentials and spikes of one unit, computed with plain scalar arithmetic.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitRun {
    pub potentials: Vec<Scalar>,
    pub spikes: Vec<bool>,
}

/// Scalar reference simulation of one unit over `x`.
pub fn simulate_unit(x: &[Scalar], p: UnitParams) -> UnitRun {
    let mut potentials = Vec::with_capacity(x.len());
    let mut spikes = Vec::with_capacity(x.len());
    let mut v: Scalar = 0.0;
    let mut fired = false;
    for &xt in x {
        let carry = if fired { 0.0 } else { 1.0 };
        v = p.w_input * xt + (1.0 - p.w_leak) * v * carry;
        fired = v > p.v_thresh;
        potentials.push(v);
        spikes.push(fired);
    }
    UnitRun { potentials, spikes }
}
