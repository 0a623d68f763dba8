//! Files written by a run: config, metrics table, checkpoint, manifest and
//! explorer bundle.

mod bundle;
mod checkpoint;
mod config;
mod manifest;
mod metrics;
mod run;

pub use bundle::{
    build_bundle, demo_input, gradient_table, parse_bundle, raster_rows, raster_sha256, render_bundle,
    unit_section, BundleInput, ExplorerBundle, GradientSection, ImageSection, NetworkSection,
    TrainingSection, UnitSection, BUNDLE_SCHEMA, BUNDLE_VERSION, DEMO_UNIT,
};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, CheckpointMeta, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{sha256_hex, RunConfig, CONFIG_KEYS};
pub use manifest::{FileEntry, RunManifest, MANIFEST_SCHEMA};
pub use metrics::{parse_metrics_csv, render_metrics_csv, MetricsProvenance, METRICS_HEADER};
pub use run::{
    encode_all, execute_train, render_config_file, stop_reason_str, DataSource, RunOutputs, BUNDLE_FILE,
    CHECKPOINT_FILE, CONFIG_FILE, MANIFEST_FILE, METRICS_FILE,
};
