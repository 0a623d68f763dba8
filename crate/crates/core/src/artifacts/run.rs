//! A training run from config to output files.

use std::fs;
use std::path::{Path, PathBuf};

use super::checkpoint::{encode_checkpoint, CheckpointMeta};
use super::config::RunConfig;
use super::manifest::{FileEntry, RunManifest, MANIFEST_SCHEMA};
use super::metrics::{render_metrics_csv, MetricsProvenance};
use crate::data::{
    encode_columns, generate_synthetic, load_image_dataset, read_cache, split_stratified, Dataset,
    EncodedSequence, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::parallel::Parallelism;
use crate::train::{train, EpochMetrics, StopReason, TrainRun};

pub const CONFIG_FILE: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BUNDLE_FILE: &str = "bundle.json";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DataSource {
    /// Gratings generated from the `synthetic_*` config keys.
    Synthetic,
    /// `root/<class>/*.png`.
    Directory(PathBuf),
    /// A dataset cache file.
    Cache(PathBuf),
}

impl DataSource {
    /// A file is read as a cache, anything else as a class directory.
    pub fn from_path(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        if path.is_file() {
            DataSource::Cache(path)
        } else {
            DataSource::Directory(path)
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DataSource::Synthetic => "synthetic".into(),
            DataSource::Directory(p) | DataSource::Cache(p) => p.display().to_string(),
        }
    }

    /// Loads and splits the data at `cfg.dims`, seeded by `cfg.seed`.
    pub fn load(&self, cfg: &RunConfig) -> Result<Dataset> {
        match self {
            DataSource::Synthetic => {
                let spec = cfg.synthetic_spec();
                let (train, test) = split_stratified(generate_synthetic(&spec)?, cfg.test_fraction, cfg.seed)?;
                Ok(Dataset {
                    dims: cfg.dims,
                    class_names: (0..spec.classes)
                        .map(|k| format!("cycles_{}", SyntheticSpec::cycles(k)))
                        .collect(),
                    train,
                    test,
                })
            }
            DataSource::Directory(root) => load_image_dataset(root, cfg.dims, cfg.test_fraction, cfg.seed),
            DataSource::Cache(path) => {
                let file = fs::File::open(path)
                    .map_err(|e| Error::Data(format!("cannot open dataset cache {}: {e}", path.display())))?;
                let (dims, images) = read_cache(std::io::BufReader::new(file))?;
                if dims != cfg.dims {
                    return Err(Error::Data(format!(
                        "dataset cache {} holds {dims} images but the run expects {}",
                        path.display(),
                        cfg.dims
                    )));
                }
                let classes = images.iter().map(|i| i.label + 1).max().unwrap_or(0);
                let (train, test) = split_stratified(images, cfg.test_fraction, cfg.seed)?;
                Ok(Dataset {
                    dims,
                    class_names: (0..classes).map(|k| format!("class_{k}")).collect(),
                    train,
                    test,
                })
            }
        }
    }
}

pub fn encode_all(images: &[crate::data::LabeledImage]) -> Vec<EncodedSequence> {
    images.iter().map(encode_columns).collect()
}

pub fn stop_reason_str(stop: &StopReason) -> String {
    match stop {
        StopReason::Patience => "patience".into(),
        StopReason::MaxEpochs => "max_epochs".into(),
        StopReason::Diverged(msg) => format!("diverged: {msg}"),
    }
}

/// Config text with a provenance comment on top; parses back with
/// [`RunConfig::parse`].
pub fn render_config_file(cfg: &RunConfig) -> String {
    format!(
        "# spikegrad config v1 config_hash={} seed={}\n{}",
        cfg.hash(),
        cfg.seed,
        cfg.render()
    )
}

pub struct RunOutputs {
    pub run: TrainRun,
    pub manifest: RunManifest,
    /// File name and contents, in the order they are written.
    pub files: Vec<(&'static str, Vec<u8>)>,
}

impl RunOutputs {
    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| *n == name).map(|(_, b)| b.as_slice())
    }

    /// Creates `dir` if needed and writes every file into it.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

/// Loads the data, trains, and renders every output file in memory. Nothing
/// touches the file system beyond reading the data.
pub fn execute_train(
    cfg: &RunConfig,
    source: &DataSource,
    parallelism: Parallelism,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<RunOutputs> {
    cfg.validate()?;
    let data = source.load(cfg)?;
    let net = Network::new(cfg.network, cfg.dims, data.classes(), cfg.dropout, cfg.seed)?;
    let run = train(
        net,
        &encode_all(&data.train),
        &encode_all(&data.test),
        &cfg.train_config(),
        parallelism,
        on_epoch,
    )?;

    let hash = cfg.hash();
    let config_text = render_config_file(cfg).into_bytes();
    let metrics = render_metrics_csv(
        &run.history,
        &MetricsProvenance {
            config_hash: hash.clone(),
            seed: cfg.seed,
        },
    )
    .into_bytes();
    let checkpoint = encode_checkpoint(
        &run.best,
        &CheckpointMeta {
            architecture: cfg.network,
            dims: cfg.dims,
            classes: data.classes(),
            dropout: cfg.dropout,
            seed: cfg.seed,
            epoch: run.best_epoch,
            config_hash: hash.clone(),
            config: cfg.render(),
        },
    )?;
    let manifest = RunManifest {
        schema: MANIFEST_SCHEMA.into(),
        version: 1,
        config_hash: hash,
        seed: cfg.seed,
        data: source.describe(),
        epochs_run: run.history.len() - 1,
        best_epoch: run.best_epoch,
        best_test_accuracy: run.best_metrics().test_accuracy,
        stop_reason: stop_reason_str(&run.stop),
        files: vec![
            FileEntry::new(CONFIG_FILE, &config_text),
            FileEntry::new(METRICS_FILE, &metrics),
            FileEntry::new(CHECKPOINT_FILE, &checkpoint),
        ],
    };
    let manifest_text = manifest.render()?.into_bytes();
    Ok(RunOutputs {
        run,
        manifest,
        files: vec![
            (CONFIG_FILE, config_text),
            (METRICS_FILE, metrics),
            (CHECKPOINT_FILE, checkpoint),
            (MANIFEST_FILE, manifest_text),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ImageDims;

    fn tiny() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.dims = ImageDims::new(4, 8, 1);
        cfg.synthetic_classes = 3;
        cfg.synthetic_per_class = 5;
        cfg.max_epochs = 2;
        cfg
    }

    #[test]
    fn config_file_parses_back() {
        let cfg = tiny();
        assert_eq!(RunConfig::parse(&render_config_file(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn outputs_carry_hash_and_seed() {
        let cfg = tiny();
        let out = execute_train(&cfg, &DataSource::Synthetic, Parallelism::Sequential, |_| {}).unwrap();
        let names: Vec<&str> = out.files.iter().map(|(n, _)| *n).collect();
        assert_eq!(names, [CONFIG_FILE, METRICS_FILE, CHECKPOINT_FILE, MANIFEST_FILE]);
        let tag = format!("config_hash={} seed={}", cfg.hash(), cfg.seed);
        for name in [CONFIG_FILE, METRICS_FILE] {
            assert!(String::from_utf8_lossy(out.file(name).unwrap()).contains(&tag));
        }
        assert_eq!(out.manifest.config_hash, cfg.hash());
        assert_eq!(out.manifest.epochs_run, 2);
    }

    #[test]
    fn missing_directory_fails_before_training() {
        let err = DataSource::Directory("/nonexistent/spikegrad".into()).load(&tiny()).unwrap_err();
        assert_eq!(err.category(), "data");
    }
}
