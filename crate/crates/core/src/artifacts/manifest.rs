use serde::{Deserialize, Serialize};

use super::config::sha256_hex;
use crate::error::Result;

pub const MANIFEST_SCHEMA: &str = "spikegrad.run-manifest";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

impl FileEntry {
    pub fn new(name: impl Into<String>, contents: &[u8]) -> Self {
        Self {
            name: name.into(),
            sha256: sha256_hex(contents),
        }
    }
}

/// Summary of a training run. Contains no timestamps, so identical runs
/// produce identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    /// `synthetic` or the data directory as given.
    pub data: String,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_test_accuracy: f64,
    pub stop_reason: String,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn render(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
