use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::DynamicImage;

use super::{normalize_u8, split_stratified, Dataset, LabeledImage};
use crate::error::{Error, Result};
use crate::network::ImageDims;
use crate::parallel::{map_ordered, Parallelism};
use crate::tensor::Scalar;

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn is_png(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Decodes one PNG and resizes it (bilinear) to `dims`.
pub fn load_image(path: &Path, dims: ImageDims, label: usize) -> Result<LabeledImage> {
    let img = image::open(path)?;
    let (w, h) = (dims.cols as u32, dims.rows as u32);
    let raw: Vec<u8> = match dims.channels {
        1 => DynamicImage::ImageLuma8(image::imageops::resize(&img.to_luma8(), w, h, FilterType::Triangle)).into_bytes(),
        3 => DynamicImage::ImageRgb8(image::imageops::resize(&img.to_rgb8(), w, h, FilterType::Triangle)).into_bytes(),
        n => return Err(Error::Data(format!("images can be loaded with 1 or 3 channels, not {n}"))),
    };
    let mut out = LabeledImage::new(dims, raw.into_iter().map(normalize_u8).collect(), label)?;
    out.source = Some(path.to_path_buf());
    Ok(out)
}

/// Loads `root/<class>/*.png`, one subdirectory per class.
///
/// Classes are labelled in lexicographic directory order and files are read
/// in lexicographic order. Every image is resized (bilinear) to `dims`.
/// Unreadable files are skipped with a warning; a class left without images
/// is an error.
pub fn load_image_dataset(root: &Path, dims: ImageDims, test_fraction: Scalar, seed: u64) -> Result<Dataset> {
    dims.validate()?;
    if !root.is_dir() {
        return Err(Error::Data(format!("data directory {} does not exist", root.display())));
    }
    let class_dirs: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.is_empty() {
        return Err(Error::Data(format!("no class subdirectories in {}", root.display())));
    }
    let mut class_names = vec![];
    let mut jobs = vec![];
    for (label, dir) in class_dirs.iter().enumerate() {
        class_names.push(dir.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()));
        jobs.extend(sorted_entries(dir)?.into_iter().filter(|p| is_png(p)).map(|p| (p, label)));
    }
    let decoded = map_ordered(&jobs, Parallelism::default(), |_, (path, label)| load_image(path, dims, *label));

    let mut images = vec![];
    for ((path, _), result) in jobs.iter().zip(decoded) {
        match result {
            Ok(img) => images.push(img),
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    for (label, name) in class_names.iter().enumerate() {
        if !images.iter().any(|i| i.label == label) {
            return Err(Error::Data(format!("class {name:?} has no readable PNG images")));
        }
    }
    let (train, test) = split_stratified(images, test_fraction, seed)?;
    Ok(Dataset {
        dims,
        class_names,
        train,
        test,
    })
}
