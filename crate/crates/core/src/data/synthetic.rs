//! Desk-scale stand-in dataset of noisy colour gratings.
//!
//! Class `k` is a vertical grating with `k + 1` cycles across the image
//! width, so in the column-wise encoding each class drives the input with a
//! different temporal frequency. Every image gets a random phase, random
//! per-channel brightness and contrast (colour carries no class
//! information), and independent Gaussian pixel noise. Values are clipped to
//! `[0, 1]` and quantized to 8 bits.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{normalize_u8, LabeledImage};
use crate::error::{Error, Result};
use crate::network::ImageDims;
use crate::tensor::Scalar;

pub const MAX_SYNTHETIC_CLASSES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dims: ImageDims,
    /// Standard deviation of the per-pixel noise.
    pub noise: Scalar,
    pub seed: u64,
}

impl SyntheticSpec {
    pub const DEFAULT_NOISE: Scalar = 0.3;
    const AMPLITUDE: f64 = 0.3;

    pub fn desk(seed: u64) -> Self {
        Self {
            classes: 10,
            per_class: 100,
            dims: ImageDims::DESK,
            noise: Self::DEFAULT_NOISE,
            seed,
        }
    }

    pub fn cycles(class: usize) -> usize {
        class + 1
    }

    fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.classes == 0 || self.classes > MAX_SYNTHETIC_CLASSES {
            return Err(Error::InvalidParameter(format!(
                "synthetic classes must lie in 1..={MAX_SYNTHETIC_CLASSES}, got {}",
                self.classes
            )));
        }
        if 2 * Self::cycles(self.classes - 1) > self.dims.cols {
            return Err(Error::InvalidParameter(format!(
                "{} columns cannot resolve {} cycles",
                self.dims.cols,
                Self::cycles(self.classes - 1)
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise must be non-negative, got {}", self.noise)));
        }
        Ok(())
    }
}

/// `per_class` images for each class, class-major.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<LabeledImage>> {
    spec.validate()?;
    let noise = Normal::new(0.0, spec.noise as f64).expect("validated noise");
    let d = spec.dims;
    let mut images = Vec::with_capacity(spec.classes * spec.per_class);
    for class in 0..spec.classes {
        for i in 0..spec.per_class {
            let stream = (class * spec.per_class + i) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(stream);
            let phase = rng.gen_range(0.0..TAU);
            let offset: Vec<f64> = (0..d.channels).map(|_| rng.gen_range(0.3..0.7)).collect();
            let gain: Vec<f64> = (0..d.channels).map(|_| rng.gen_range(0.4..1.0)).collect();
            let omega = TAU * SyntheticSpec::cycles(class) as f64 / d.cols as f64;
            let mut pixels = Vec::with_capacity(d.pixels());
            for _ in 0..d.rows {
                for t in 0..d.cols {
                    let wave = (omega * t as f64 + phase).sin();
                    for c in 0..d.channels {
                        let v = offset[c] + SyntheticSpec::AMPLITUDE * gain[c] * wave + noise.sample(&mut rng);
                        pixels.push(normalize_u8((v.clamp(0.0, 1.0) * 255.0).round() as u8));
                    }
                }
            }
            images.push(LabeledImage::new(d, pixels, class)?);
        }
    }
    Ok(images)
}
