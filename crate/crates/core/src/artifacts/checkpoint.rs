//! Binary network checkpoint.
//!
//! Little-endian layout:
//!
//! ```text
//! magic      4 bytes  "SGCK"
//! version    u32      1
//! meta_len   u32      length of the metadata JSON
//! meta       meta_len bytes of UTF-8 JSON (CheckpointMeta)
//! blocks     u32      number of parameter blocks
//! per block: name_len u16, name bytes, rank u32, rank × u32 dims
//! payload    all blocks' values as f32, in block order
//! checksum   32 bytes SHA-256 of everything above
//! ```
//!
//! Training keeps parameters at single precision (see
//! [`Network::round_to_storage_precision`]), so a loaded checkpoint
//! reproduces the saved network exactly.

use std::io::Read;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::{Architecture, ImageDims, Network};
use crate::tensor::{Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub architecture: Architecture,
    pub dims: ImageDims,
    pub classes: usize,
    pub dropout: Scalar,
    pub seed: u64,
    pub epoch: usize,
    pub config_hash: String,
    /// Canonical config text the network was trained with.
    pub config: String,
}

pub fn encode_checkpoint(net: &Network, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let json = serde_json::to_vec(meta)?;
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let names = net.parameter_names();
    let params = net.parameters();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, p) in names.iter().zip(&params) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(p.rank() as u32).to_le_bytes());
        for &d in p.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for p in &params {
        for &v in p.data() {
            let narrow = v as f32;
            if narrow as Scalar != v {
                return Err(Error::Format(format!(
                    "parameter value {v} is not representable in the f32 payload"
                )));
            }
            out.extend_from_slice(&narrow.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Network, CheckpointMeta)> {
    if bytes.len() < 4 + 32 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(Error::Format("checkpoint checksum mismatch".into()));
    }
    let mut c = Cursor { bytes: body, at: 4 };
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = c.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(c.take(meta_len)?)?;
    let mut net = Network::new(meta.architecture, meta.dims, meta.classes, meta.dropout, meta.seed)?;
    let blocks = c.u32()? as usize;
    let expected = net.parameter_names();
    if blocks != expected.len() {
        return Err(Error::Format(format!(
            "checkpoint has {blocks} parameter blocks, network expects {}",
            expected.len()
        )));
    }
    let mut shapes = Vec::with_capacity(blocks);
    for want in &expected {
        let len = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(len)?).map_err(|_| Error::Format("block name is not UTF-8".into()))?;
        if name != *want {
            return Err(Error::Format(format!("expected block {want:?}, found {name:?}")));
        }
        let rank = c.u32()? as usize;
        let shape = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        shapes.push(shape);
    }
    let mut values = Vec::with_capacity(blocks);
    for shape in shapes {
        let n: usize = shape.iter().product();
        let data = c
            .take(4 * n)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as Scalar)
            .collect();
        values.push(Tensor::new(shape, data)?);
    }
    if c.at != body.len() {
        return Err(Error::Format("trailing bytes after checkpoint payload".into()));
    }
    net.set_parameters(&values)?;
    Ok((net, meta))
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(Network, CheckpointMeta)> {
    let mut bytes = vec![];
    input.read_to_end(&mut bytes)?;
    decode_checkpoint(&bytes)
}
