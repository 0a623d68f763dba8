use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use spikegrad::data::{
    compression_factor, decode_columns, encode_columns, generate_synthetic, load_image_dataset, read_cache,
    write_cache, LabeledImage, SyntheticSpec,
};
use spikegrad::lif::SpikeRaster;
use spikegrad::network::ImageDims;

/// Predicts the class from the strongest non-DC bin of the column-mean
/// signal: class k has k + 1 cycles across the width.
fn fft_oracle(img: &LabeledImage) -> usize {
    let d = img.dims;
    let mut signal: Vec<Complex<f64>> = (0..d.cols)
        .map(|t| {
            let mut s = 0.0;
            for r in 0..d.rows {
                for c in 0..d.channels {
                    s += img.pixel(r, t, c) as f64;
                }
            }
            Complex::new(s, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(d.cols).process(&mut signal);
    (1..=d.cols / 2)
        .max_by(|&a, &b| signal[a].norm().total_cmp(&signal[b].norm()))
        .unwrap()
        - 1
}

fn oracle_accuracy(spec: &SyntheticSpec) -> f64 {
    let images = generate_synthetic(spec).unwrap();
    let hits = images.iter().filter(|i| fft_oracle(i) == i.label).count();
    hits as f64 / images.len() as f64
}

#[test]
fn noiseless_gratings_are_separable_by_frequency() {
    let mut spec = SyntheticSpec::desk(3);
    spec.noise = 0.0;
    assert_eq!(oracle_accuracy(&spec), 1.0);
}

#[test]
fn default_noise_keeps_classes_separable() {
    let acc = oracle_accuracy(&SyntheticSpec::desk(4));
    assert!(acc >= 0.95, "oracle accuracy {acc}");
}

#[test]
fn encoding_round_trips_on_synthetic_images() {
    let images = generate_synthetic(&SyntheticSpec { per_class: 2, ..SyntheticSpec::desk(5) }).unwrap();
    for img in &images {
        let seq = encode_columns(img);
        assert_eq!(seq.x.shape(), &[40, 96]);
        assert_eq!(&decode_columns(&seq, img.dims).unwrap(), img);
    }
}

#[test]
fn paper_sized_image_encodes_to_500_steps_of_1200() {
    let dims = ImageDims::PAPER;
    let img = LabeledImage::new(dims, vec![0.5; dims.pixels()], 0).unwrap();
    assert_eq!(encode_columns(&img).x.shape(), &[500, 1200]);
}

#[test]
fn compression_factor_is_eight_for_matching_shapes() {
    for dims in [ImageDims::PAPER, ImageDims::DESK, ImageDims::new(3, 7, 1)] {
        let img = LabeledImage::new(dims, vec![0.0; dims.pixels()], 0).unwrap();
        let raster = SpikeRaster {
            neurons: dims.features(),
            timesteps: dims.cols,
            spikes: vec![false; dims.features() * dims.cols],
            trace: None,
        };
        assert_eq!(compression_factor(&raster, &img).unwrap(), 8.0);
        let wrong = SpikeRaster { neurons: raster.neurons + 1, spikes: vec![false; (raster.neurons + 1) * dims.cols], ..raster };
        assert!(compression_factor(&wrong, &img).is_err());
    }
}

fn write_png(path: &Path, w: u32, h: u32, value: u8) {
    RgbImage::from_pixel(w, h, Rgb([value, value / 2, 255 - value])).save(path).unwrap();
}

fn make_corpus(root: &Path, classes: usize, per_class: usize) {
    for c in 0..classes {
        let dir = root.join(format!("class_{c:02}"));
        fs::create_dir_all(&dir).unwrap();
        for i in 0..per_class {
            write_png(&dir.join(format!("{i:03}.png")), 12, 9, (c * 20 + i) as u8);
        }
    }
}

#[test]
fn loads_class_directories_in_lexicographic_order() {
    let tmp = tempfile::tempdir().unwrap();
    make_corpus(tmp.path(), 10, 5);
    let dims = ImageDims::new(6, 8, 3);
    let ds = load_image_dataset(tmp.path(), dims, 0.2, 1).unwrap();
    assert_eq!(ds.classes(), 10);
    assert_eq!(ds.class_names[0], "class_00");
    assert_eq!(ds.class_names[9], "class_09");
    assert_eq!(ds.train.len() + ds.test.len(), 50);
    assert_eq!(ds.test.len(), 10);
    for img in ds.train.iter().chain(&ds.test) {
        assert_eq!(img.dims, dims);
        let src = img.source.as_ref().unwrap();
        let dir = src.parent().unwrap().file_name().unwrap().to_str().unwrap();
        assert_eq!(dir, format!("class_{:02}", img.label));
    }
    let again = load_image_dataset(tmp.path(), dims, 0.2, 1).unwrap();
    assert_eq!(again, ds);
}

#[test]
fn eight_bit_extremes_map_to_unit_interval() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("only");
    fs::create_dir_all(&dir).unwrap();
    RgbImage::from_pixel(4, 4, Rgb([255, 0, 255])).save(dir.join("a.png")).unwrap();
    let ds = load_image_dataset(tmp.path(), ImageDims::new(4, 4, 3), 0.0, 0).unwrap();
    let img = &ds.train[0];
    assert_eq!(img.pixel(0, 0, 0), 1.0);
    assert_eq!(img.pixel(0, 0, 1), 0.0);
    assert_eq!(img.pixel(3, 3, 2), 1.0);
}

#[test]
fn unreadable_files_are_skipped_and_empty_classes_fail() {
    let tmp = tempfile::tempdir().unwrap();
    make_corpus(tmp.path(), 2, 3);
    fs::write(tmp.path().join("class_00").join("broken.png"), b"not a png").unwrap();
    let ds = load_image_dataset(tmp.path(), ImageDims::new(4, 4, 3), 0.0, 0).unwrap();
    assert_eq!(ds.train.len(), 6);

    fs::create_dir_all(tmp.path().join("class_99")).unwrap();
    fs::write(tmp.path().join("class_99").join("x.png"), b"junk").unwrap();
    let err = load_image_dataset(tmp.path(), ImageDims::new(4, 4, 3), 0.0, 0).unwrap_err();
    assert!(err.to_string().contains("class_99"), "{err}");
    assert!(load_image_dataset(&tmp.path().join("missing"), ImageDims::new(4, 4, 3), 0.2, 0).is_err());
}

#[test]
fn cache_round_trips_loaded_images() {
    let tmp = tempfile::tempdir().unwrap();
    make_corpus(tmp.path(), 2, 2);
    let dims = ImageDims::new(5, 5, 3);
    let ds = load_image_dataset(tmp.path(), dims, 0.0, 0).unwrap();
    let mut buf = vec![];
    write_cache(&mut buf, dims, &ds.train).unwrap();
    let (d, back) = read_cache(buf.as_slice()).unwrap();
    assert_eq!(d, dims);
    for (a, b) in back.iter().zip(&ds.train) {
        assert_eq!(a.pixels, b.pixels);
        assert_eq!(a.label, b.label);
    }
}
