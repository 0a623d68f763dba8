//! Explorer bundle: one JSON document with everything the browser explorer
//! renders.
//!
//! Rasters are stored as one string of `0`/`1` per neuron. Matrices are
//! arrays of rows; `potentials` and rasters are neuron-major, the other
//! time series are time-major (`[T][features]`). The `gradient_flow.table`
//! entry `[t][s]` is `∂y_t/∂x_s`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Tape;
use crate::data::{encode_columns, LabeledImage};
use crate::error::{Error, Result};
use crate::lif::{self, simulate_unit, GradientMode, SpikeRaster, UnitParams};
use crate::network::{Architecture, ImageDims, Network};
use crate::tensor::{Scalar, Tensor};

pub const BUNDLE_SCHEMA: &str = "spikegrad.explorer-bundle";
pub const BUNDLE_VERSION: u32 = 1;

/// Parameters of the single-unit demo.
pub const DEMO_UNIT: UnitParams = UnitParams::new(0.5, 0.1, 1.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitSection {
    pub params: UnitParams,
    pub input: Vec<Scalar>,
    pub potentials: Vec<Scalar>,
    /// Steps at which the unit spiked.
    pub spikes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageSection {
    pub architecture: Architecture,
    pub dims: ImageDims,
    pub label: usize,
    /// `[T][rows·channels]` encoded image columns.
    pub columns: Vec<Vec<Scalar>>,
    /// `[T][neurons]` drive into the LIF layer.
    pub lif_input: Vec<Vec<Scalar>>,
    /// Per-neuron parameters after expanding shared unit types.
    pub w_input: Vec<Scalar>,
    pub w_leak: Vec<Scalar>,
    pub v_thresh: Scalar,
    /// `[neurons][T]`
    pub potentials: Vec<Vec<Scalar>>,
    pub raster: Vec<String>,
    pub raster_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSection {
    /// `[T][30]` recurrent activations.
    pub hidden: Vec<Vec<Scalar>>,
    /// `[T][classes]`
    pub probs: Vec<Vec<Scalar>>,
    pub accuracy: Scalar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSection {
    pub epoch_after: usize,
    pub raster_before: Vec<String>,
    pub raster_after: Vec<String>,
    pub density_before: Scalar,
    pub density_after: Scalar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientSection {
    pub params: UnitParams,
    pub input: Vec<Scalar>,
    pub spikes: Vec<usize>,
    pub table: Vec<Vec<Scalar>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorerBundle {
    pub schema: String,
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub lif_unit: UnitSection,
    pub image: ImageSection,
    pub network: NetworkSection,
    pub training: TrainingSection,
    pub gradient_flow: GradientSection,
}

/// Hex SHA-256 over `neurons` and `timesteps` as little-endian u32 followed
/// by one byte (0 or 1) per cell, neuron-major.
pub fn raster_sha256(raster: &SpikeRaster) -> String {
    let mut h = Sha256::new();
    h.update((raster.neurons as u32).to_le_bytes());
    h.update((raster.timesteps as u32).to_le_bytes());
    h.update(raster.spikes.iter().map(|&s| s as u8).collect::<Vec<_>>());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn raster_rows(raster: &SpikeRaster) -> Vec<String> {
    (0..raster.neurons)
        .map(|i| raster.neuron(i).iter().map(|&s| if s { '1' } else { '0' }).collect())
        .collect()
}

fn rows_of(t: &Tensor) -> Vec<Vec<Scalar>> {
    let cols = t.shape().last().copied().unwrap_or(1);
    t.data().chunks(cols).map(<[Scalar]>::to_vec).collect()
}

/// Input of the single-unit demo: rest, a constant pulse, rest.
pub fn demo_input() -> Vec<Scalar> {
    let mut x = vec![0.0; 5];
    x.extend([1.0; 20]);
    x.extend([0.0; 15]);
    x
}

pub fn unit_section(params: UnitParams, input: Vec<Scalar>) -> UnitSection {
    let run = simulate_unit(&input, params);
    UnitSection {
        params,
        spikes: (0..input.len()).filter(|&t| run.spikes[t]).collect(),
        potentials: run.potentials,
        input,
    }
}

/// `∂y_t/∂x_s` for one unit, from the tape.
pub fn gradient_table(params: UnitParams, input: &[Scalar]) -> Result<Vec<Vec<Scalar>>> {
    let n = input.len();
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new(vec![n, 1], input.to_vec())?);
    let wi = tape.constant(Tensor::row(vec![params.w_input]));
    let wl = tape.constant(Tensor::row(vec![params.w_leak]));
    let trace = lif::unroll(&mut tape, x, wi, wl, params.v_thresh, GradientMode::Surrogate)?;
    let mut table = Vec::with_capacity(n);
    for t in 0..n {
        let y_t = tape.slice(trace.spikes, 0, t, 1)?;
        let y_t = tape.sum(y_t)?;
        table.push(tape.backward(y_t)?.wrt(x).into_data());
    }
    Ok(table)
}

pub struct BundleInput<'a> {
    pub network: &'a Network,
    /// The same architecture at initialization, for the before/after rasters.
    pub initial: &'a Network,
    pub image: &'a LabeledImage,
    pub epoch: usize,
    pub config_hash: String,
    pub seed: u64,
}

pub fn build_bundle(input: BundleInput<'_>) -> Result<ExplorerBundle> {
    let net = input.network;
    if input.image.dims != net.dims {
        return Err(Error::ShapeMismatch {
            op: "export image",
            lhs: vec![net.dims.rows, net.dims.cols, net.dims.channels],
            rhs: vec![input.image.dims.rows, input.image.dims.cols, input.image.dims.channels],
        });
    }
    let seq = encode_columns(input.image);
    let after = net.record(&seq.x)?;
    let before = input.initial.record(&seq.x)?;
    let lif_params = net.lif.expanded()?;
    let trace = after.raster.trace.as_ref().expect("record keeps the trace");
    let potentials = trace.chunks(after.raster.timesteps).map(<[Scalar]>::to_vec).collect();

    let grad_input = vec![1.0; 16];
    Ok(ExplorerBundle {
        schema: BUNDLE_SCHEMA.into(),
        version: BUNDLE_VERSION,
        config_hash: input.config_hash,
        seed: input.seed,
        lif_unit: unit_section(DEMO_UNIT, demo_input()),
        image: ImageSection {
            architecture: net.architecture,
            dims: net.dims,
            label: input.image.label,
            columns: rows_of(&seq.x),
            lif_input: rows_of(&after.lif_input),
            w_input: lif_params.w_input,
            w_leak: lif_params.w_leak,
            v_thresh: lif_params.v_thresh,
            potentials,
            raster: raster_rows(&after.raster),
            raster_sha256: raster_sha256(&after.raster),
        },
        network: NetworkSection {
            hidden: rows_of(&after.hidden),
            accuracy: crate::train::accuracy_time_averaged(&after.probs, input.image.label)?,
            probs: rows_of(&after.probs),
        },
        training: TrainingSection {
            epoch_after: input.epoch,
            raster_before: raster_rows(&before.raster),
            raster_after: raster_rows(&after.raster),
            density_before: before.raster.density(),
            density_after: after.raster.density(),
        },
        gradient_flow: GradientSection {
            params: DEMO_UNIT,
            spikes: unit_section(DEMO_UNIT, grad_input.clone()).spikes,
            table: gradient_table(DEMO_UNIT, &grad_input)?,
            input: grad_input,
        },
    })
}

pub fn render_bundle(bundle: &ExplorerBundle) -> Result<String> {
    Ok(serde_json::to_string_pretty(bundle)?)
}

/// Parses a bundle, rejecting other schemas and versions.
pub fn parse_bundle(text: &str) -> Result<ExplorerBundle> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let schema = value.get("schema").and_then(|v| v.as_str());
    let version = value.get("version").and_then(|v| v.as_u64());
    if schema != Some(BUNDLE_SCHEMA) {
        return Err(Error::Format(format!("not an explorer bundle (schema {schema:?})")));
    }
    if version != Some(BUNDLE_VERSION as u64) {
        return Err(Error::Format(format!(
            "bundle version {version:?} is not supported (expected {BUNDLE_VERSION})"
        )));
    }
    Ok(serde_json::from_value(value)?)
}
