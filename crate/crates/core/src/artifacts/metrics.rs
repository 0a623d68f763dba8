//! Per-epoch metrics table.
//!
//! ```text
//! # spikegrad metrics v1 config_hash=<hex> seed=<u64>
//! epoch,train_acc,test_acc,loss,spike_density
//! 0,0.1,0.1,2.30,0.05
//! ```
//!
//! Floats are written in shortest round-trip form, so parsing a written
//! table gives back the exact values.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::train::EpochMetrics;

pub const METRICS_HEADER: &str = "epoch,train_acc,test_acc,loss,spike_density";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetricsProvenance {
    pub config_hash: String,
    pub seed: u64,
}

pub fn render_metrics_csv(history: &[EpochMetrics], provenance: &MetricsProvenance) -> String {
    let mut s = format!(
        "# spikegrad metrics v1 config_hash={} seed={}\n{METRICS_HEADER}\n",
        provenance.config_hash, provenance.seed
    );
    for m in history {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            m.epoch, m.train_accuracy, m.test_accuracy, m.mean_loss, m.spike_density
        );
    }
    s
}

pub fn parse_metrics_csv(text: &str) -> Result<(MetricsProvenance, Vec<EpochMetrics>)> {
    let bad = |msg: String| Error::Format(format!("metrics table: {msg}"));
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let rest = first
        .strip_prefix("# spikegrad metrics v1 ")
        .ok_or_else(|| bad(format!("unrecognised first line {first:?}")))?;
    let (mut hash, mut seed) = (None, None);
    for field in rest.split_whitespace() {
        match field.split_once('=') {
            Some(("config_hash", v)) => hash = Some(v.to_string()),
            Some(("seed", v)) => seed = Some(v.parse().map_err(|_| bad(format!("bad seed {v:?}")))?),
            _ => return Err(bad(format!("unknown field {field:?}"))),
        }
    }
    let provenance = MetricsProvenance {
        config_hash: hash.ok_or_else(|| bad("missing config_hash".into()))?,
        seed: seed.ok_or_else(|| bad("missing seed".into()))?,
    };
    if lines.next() != Some(METRICS_HEADER) {
        return Err(bad("missing column header".into()));
    }
    let mut rows = vec![];
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad(format!("expected 5 columns in {line:?}")));
        }
        let num = |s: &str| s.parse().map_err(|_| bad(format!("bad number {s:?}")));
        rows.push(EpochMetrics {
            epoch: f[0].parse().map_err(|_| bad(format!("bad epoch {:?}", f[0])))?,
            train_accuracy: num(f[1])?,
            test_accuracy: num(f[2])?,
            mean_loss: num(f[3])?,
            spike_density: num(f[4])?,
        });
    }
    Ok((provenance, rows))
}
