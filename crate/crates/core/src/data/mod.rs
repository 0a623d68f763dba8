//! Images, column-wise time encoding and datasets.
//!
//! An image with `rows × cols × channels` pixels is fed to a network as a
//! sequence of `cols` timesteps, each a vector of `rows·channels` values in
//! row-major, channel-minor order: element `r·channels + c` of step `t` is
//! pixel `(r, t, c)`.

mod cache;
mod loader;
mod synthetic;

pub use cache::{read_cache, write_cache, CACHE_MAGIC, CACHE_VERSION};
pub use loader::{load_image, load_image_dataset};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lif::SpikeRaster;
use crate::network::ImageDims;
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_TEST_FRACTION: Scalar = 0.2;

/// Maps an 8-bit intensity to `[0, 1]`.
///
/// The value is computed in single precision so that every pixel survives a
/// round trip through the `f32` dataset cache exactly.
pub fn normalize_u8(v: u8) -> Scalar {
    (v as f32 / 255.0) as Scalar
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub dims: ImageDims,
    /// `[rows × cols × channels]`, row-major.
    pub pixels: Vec<Scalar>,
    pub label: usize,
    pub source: Option<PathBuf>,
}

impl LabeledImage {
    pub fn new(dims: ImageDims, pixels: Vec<Scalar>, label: usize) -> Result<Self> {
        dims.validate()?;
        if pixels.len() != dims.pixels() {
            return Err(Error::Data(format!(
                "image {dims} needs {} values, got {}",
                dims.pixels(),
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self {
            dims,
            pixels,
            label,
            source: None,
        })
    }

    pub fn pixel(&self, row: usize, col: usize, channel: usize) -> Scalar {
        let d = self.dims;
        self.pixels[(row * d.cols + col) * d.channels + channel]
    }
}

/// `[T × rows·channels]` input sequence for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSequence {
    pub x: Tensor,
    pub label: usize,
}

pub fn encode_columns(img: &LabeledImage) -> EncodedSequence {
    let d = img.dims;
    let width = d.features();
    let mut data = vec![0.0; d.cols * width];
    for r in 0..d.rows {
        for t in 0..d.cols {
            for c in 0..d.channels {
                data[t * width + r * d.channels + c] = img.pixel(r, t, c);
            }
        }
    }
    EncodedSequence {
        x: Tensor::new(vec![d.cols, width], data).expect("dims validated on construction"),
        label: img.label,
    }
}

/// Inverse of [`encode_columns`].
pub fn decode_columns(seq: &EncodedSequence, dims: ImageDims) -> Result<LabeledImage> {
    let want = [dims.cols, dims.features()];
    if seq.x.shape() != want {
        return Err(Error::ShapeMismatch {
            op: "decode_columns",
            lhs: want.to_vec(),
            rhs: seq.x.shape().to_vec(),
        });
    }
    let width = dims.features();
    let mut pixels = vec![0.0; dims.pixels()];
    for (t, column) in seq.x.data().chunks(width).enumerate() {
        for r in 0..dims.rows {
            for c in 0..dims.channels {
                pixels[(r * dims.cols + t) * dims.channels + c] = column[r * dims.channels + c];
            }
        }
    }
    LabeledImage::new(dims, pixels, seq.label)
}

/// Bits of the 8-bit image over bits of its boolean raster.
pub fn compression_factor(raster: &SpikeRaster, img: &LabeledImage) -> Result<Scalar> {
    let d = img.dims;
    if raster.neurons != d.features() || raster.timesteps != d.cols {
        return Err(Error::ShapeMismatch {
            op: "compression_factor",
            lhs: vec![d.features(), d.cols],
            rhs: vec![raster.neurons, raster.timesteps],
        });
    }
    let image_bits = 8 * d.pixels();
    let raster_bits = raster.neurons * raster.timesteps;
    Ok(image_bits as Scalar / raster_bits as Scalar)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dims: ImageDims,
    pub class_names: Vec<String>,
    pub train: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
}

impl Dataset {
    pub fn classes(&self) -> usize {
        self.class_names.len()
    }
}

/// Per-class seeded shuffle, then the first `round(n·test_fraction)` images
/// of every class go to the test split. Both splits keep class order.
pub fn split_stratified(
    images: Vec<LabeledImage>,
    test_fraction: Scalar,
    seed: u64,
) -> Result<(Vec<LabeledImage>, Vec<LabeledImage>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidParameter(format!(
            "test fraction must lie in [0, 1), got {test_fraction}"
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<LabeledImage>> = BTreeMap::new();
    for img in images {
        by_class.entry(img.label).or_default().push(img);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (vec![], vec![]);
    for (_, mut group) in by_class {
        group.shuffle(&mut rng);
        let n_test = (group.len() as Scalar * test_fraction).round() as usize;
        let rest = group.split_off(n_test);
        test.extend(group);
        train.extend(rest);
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_three_encodes_column_wise() {
        let dims = ImageDims::new(2, 3, 1);
        let px = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0].map(|v| v / 10.0).to_vec();
        let img = LabeledImage::new(dims, px, 0).unwrap();
        let seq = encode_columns(&img);
        assert_eq!(seq.x.shape(), &[3, 2]);
        assert_eq!(seq.x.data(), &[0.1, 0.4, 0.2, 0.5, 0.3, 0.6]);
        assert_eq!(decode_columns(&seq, dims).unwrap(), img);
    }

    #[test]
    fn channel_minor_order() {
        let dims = ImageDims::new(2, 1, 3);
        let px: Vec<Scalar> = (0..6).map(|v| v as Scalar / 10.0).collect();
        let img = LabeledImage::new(dims, px.clone(), 0).unwrap();
        // one column, rows then channels
        assert_eq!(encode_columns(&img).x.data(), px.as_slice());
    }

    #[test]
    fn normalization_endpoints() {
        assert_eq!(normalize_u8(255), 1.0);
        assert_eq!(normalize_u8(0), 0.0);
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(LabeledImage::new(ImageDims::new(1, 1, 1), vec![1.5], 0).is_err());
        assert!(LabeledImage::new(ImageDims::new(1, 2, 1), vec![0.5], 0).is_err());
    }

    #[test]
    fn stratified_split_is_balanced_and_seeded() {
        let dims = ImageDims::new(1, 1, 1);
        let images: Vec<_> = (0..30)
            .map(|i| LabeledImage::new(dims, vec![i as Scalar / 100.0], i % 3).unwrap())
            .collect();
        let (train, test) = split_stratified(images.clone(), 0.2, 4).unwrap();
        assert_eq!((train.len(), test.len()), (24, 6));
        for c in 0..3 {
            assert_eq!(test.iter().filter(|i| i.label == c).count(), 2);
        }
        assert_eq!(split_stratified(images, 0.2, 4).unwrap().1, test);
    }
}
