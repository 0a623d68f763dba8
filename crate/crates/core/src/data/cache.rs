//! Binary dataset cache.
//!
//! Little-endian layout:
//!
//! ```text
//! magic    4 bytes  "SGDS"
//! version  u32      1
//! rows     u32
//! cols     u32
//! channels u32
//! count    u32      number of images
//! labels   count × u32
//! pixels   count × rows × cols × channels × f32, row-major per image
//! ```

use std::io::{Read, Write};

use super::LabeledImage;
use crate::error::{Error, Result};
use crate::network::ImageDims;
use crate::tensor::Scalar;

pub const CACHE_MAGIC: &[u8; 4] = b"SGDS";
pub const CACHE_VERSION: u32 = 1;

pub fn write_cache<W: Write>(mut out: W, dims: ImageDims, images: &[LabeledImage]) -> Result<()> {
    out.write_all(CACHE_MAGIC)?;
    let count = u32::try_from(images.len()).map_err(|_| Error::Format("too many images for cache".into()))?;
    for v in [CACHE_VERSION, dims.rows as u32, dims.cols as u32, dims.channels as u32, count] {
        out.write_all(&v.to_le_bytes())?;
    }
    for img in images {
        if img.dims != dims {
            return Err(Error::Data(format!("image of dims {} in a {dims} cache", img.dims)));
        }
        out.write_all(&(img.label as u32).to_le_bytes())?;
    }
    for img in images {
        for &v in &img.pixels {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_cache<R: Read>(mut input: R) -> Result<(ImageDims, Vec<LabeledImage>)> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Format("not a dataset cache (bad magic)".into()));
    }
    let version = read_u32(&mut input)?;
    if version != CACHE_VERSION {
        return Err(Error::Format(format!("unsupported dataset cache version {version}")));
    }
    let dims = ImageDims::new(
        read_u32(&mut input)? as usize,
        read_u32(&mut input)? as usize,
        read_u32(&mut input)? as usize,
    );
    dims.validate()?;
    let count = read_u32(&mut input)? as usize;
    let labels = (0..count)
        .map(|_| read_u32(&mut input).map(|l| l as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut images = Vec::with_capacity(count);
    let mut buf = vec![0u8; 4 * dims.pixels()];
    for label in labels {
        input.read_exact(&mut buf)?;
        let pixels = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as Scalar)
            .collect();
        images.push(LabeledImage::new(dims, pixels, label)?);
    }
    Ok((dims, images))
}
