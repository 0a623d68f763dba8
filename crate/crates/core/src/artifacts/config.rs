//! `key = value` run configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! network = 2
//! dims = 32x40x3
//! seed = 1
//! optimizer = adam
//! learning_rate = 0.001
//! patience = 30
//! gradient_mode = surrogate
//! dropout = 0.3
//! ```
//!
//! Keys not given keep their defaults. The config hash is the SHA-256 of
//! [`RunConfig::render`], which lists every key in a fixed order, so two
//! files that differ only in comments, ordering or omitted defaults hash
//! the same.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{SyntheticSpec, DEFAULT_TEST_FRACTION};
use crate::error::{Error, Result};
use crate::lif::GradientMode;
use crate::network::{Architecture, ImageDims, DEFAULT_DROPOUT};
use crate::optim::OptimizerKind;
use crate::tensor::Scalar;
use crate::train::TrainConfig;

pub const CONFIG_KEYS: &[&str] = &[
    "network",
    "dims",
    "seed",
    "optimizer",
    "learning_rate",
    "patience",
    "gradient_mode",
    "dropout",
    "batch_size",
    "max_epochs",
    "test_fraction",
    "synthetic_classes",
    "synthetic_per_class",
    "synthetic_noise",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub network: Architecture,
    pub dims: ImageDims,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub learning_rate: Scalar,
    pub patience: usize,
    pub gradient_mode: GradientMode,
    pub dropout: Scalar,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub test_fraction: Scalar,
    pub synthetic_classes: usize,
    pub synthetic_per_class: usize,
    pub synthetic_noise: Scalar,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let synth = SyntheticSpec::desk(train.seed);
        Self {
            network: Architecture::Network2,
            dims: ImageDims::DESK,
            seed: train.seed,
            optimizer: train.optimizer,
            learning_rate: train.learning_rate,
            patience: train.patience,
            gradient_mode: train.gradient_mode,
            dropout: DEFAULT_DROPOUT,
            batch_size: train.batch_size,
            max_epochs: train.max_epochs,
            test_fraction: DEFAULT_TEST_FRACTION,
            synthetic_classes: synth.classes,
            synthetic_per_class: synth.per_class,
            synthetic_noise: synth.noise,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for key `{key}`")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {raw:?}", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "network" => self.network = value.parse()?,
            "dims" => self.dims = value.parse()?,
            "seed" => self.seed = parse_value(key, value)?,
            "optimizer" => self.optimizer = value.parse()?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "gradient_mode" => self.gradient_mode = value.parse()?,
            "dropout" => self.dropout = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "max_epochs" => self.max_epochs = parse_value(key, value)?,
            "test_fraction" => self.test_fraction = parse_value(key, value)?,
            "synthetic_classes" => self.synthetic_classes = parse_value(key, value)?,
            "synthetic_per_class" => self.synthetic_per_class = parse_value(key, value)?,
            "synthetic_noise" => self.synthetic_noise = parse_value(key, value)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown key `{other}`; valid keys: {}",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        self.dims.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config(format!("test_fraction must lie in [0, 1), got {}", self.test_fraction)));
        }
        Ok(())
    }

    /// Canonical text: every key, fixed order, one per line.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("network", self.network.as_str().into());
        put("dims", self.dims.to_string());
        put("seed", self.seed.to_string());
        put("optimizer", self.optimizer.to_string());
        put("learning_rate", self.learning_rate.to_string());
        put("patience", self.patience.to_string());
        put("gradient_mode", self.gradient_mode.as_str().into());
        put("dropout", self.dropout.to_string());
        put("batch_size", self.batch_size.to_string());
        put("max_epochs", self.max_epochs.to_string());
        put("test_fraction", self.test_fraction.to_string());
        put("synthetic_classes", self.synthetic_classes.to_string());
        put("synthetic_per_class", self.synthetic_per_class.to_string());
        put("synthetic_noise", self.synthetic_noise.to_string());
        s
    }

    /// Hex SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        sha256_hex(self.render().as_bytes())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            gradient_mode: self.gradient_mode,
            dropout: self.dropout,
        }
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            classes: self.synthetic_classes,
            per_class: self.synthetic_per_class,
            dims: self.dims,
            noise: self.synthetic_noise,
            seed: self.seed,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::parse("network = 1\n# comment\ndims = 8x10x3  # trailing\nseed=5\ngradient_mode = disabled\n").unwrap();
        assert_eq!(cfg.network, Architecture::Network1);
        assert_eq!(cfg.dims, ImageDims::new(8, 10, 3));
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.gradient_mode, GradientMode::Disabled);
        assert_eq!(RunConfig::parse(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = RunConfig::parse("netwrok = 2").unwrap_err().to_string();
        assert!(err.contains("netwrok"));
        for k in CONFIG_KEYS {
            assert!(err.contains(k), "{err}");
        }
    }

    #[test]
    fn rejects_bad_lines_and_values() {
        assert!(RunConfig::parse("network 2").is_err());
        assert!(RunConfig::parse("patience = 0").is_err());
        assert!(RunConfig::parse("seed = -1").is_err());
        assert!(RunConfig::parse("seed = 1\nseed = 2").is_err());
        assert!(RunConfig::parse("optimizer = lbfgs").is_err());
    }

    #[test]
    fn hash_ignores_layout_but_not_values() {
        let a = RunConfig::parse("seed = 3\nnetwork = 2").unwrap();
        let b = RunConfig::parse("# x\nnetwork = 2\n\nseed = 3\n").unwrap();
        let c = RunConfig::parse("seed = 4").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
