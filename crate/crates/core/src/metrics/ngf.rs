//! NGF gradient-field interchange files.
//!
//! Little-endian layout: `"NGF1"`, u32 width, u32 height, u32 channels,
//! u32 name length, UTF-8 name, f64 score, then `width * height * channels`
//! f32 gradient samples, channel-planar and row-major.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{Geometry, GradientField};
use crate::io::write_atomic;

use super::MetricEvaluation;

pub const NGF_MAGIC: &[u8; 4] = b"NGF1";

pub fn encode_ngf(eval: &MetricEvaluation, name: &str) -> Result<Vec<u8>> {
    if name.is_empty() {
        return Err(Error::invalid("metric name must not be empty"));
    }
    let g = eval.gradient.geometry();
    let mut out = Vec::with_capacity(28 + name.len() + 4 * g.len());
    out.extend_from_slice(NGF_MAGIC);
    for v in [g.width, g.height, g.channels, name.len()] {
        let v = u32::try_from(v).map_err(|_| Error::invalid("ngf field exceeds u32"))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&eval.score.to_le_bytes());
    for &v in eval.gradient.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8]> {
    let s = bytes
        .get(*at..*at + n)
        .ok_or_else(|| Error::format("ngf", "truncated"))?;
    *at += n;
    Ok(s)
}

fn take_u32(bytes: &[u8], at: &mut usize) -> Result<usize> {
    Ok(u32::from_le_bytes(take(bytes, at, 4)?.try_into().unwrap()) as usize)
}

/// Parses NGF bytes. When `expected` is given the field geometry must match.
pub fn decode_ngf(bytes: &[u8], expected: Option<Geometry>) -> Result<(MetricEvaluation, String)> {
    let mut at = 0;
    if take(bytes, &mut at, 4)? != NGF_MAGIC {
        return Err(Error::format("ngf", "bad magic"));
    }
    let width = take_u32(bytes, &mut at)?;
    let height = take_u32(bytes, &mut at)?;
    let channels = take_u32(bytes, &mut at)?;
    let name_len = take_u32(bytes, &mut at)?;
    let geometry = Geometry::new(width, height, channels)?;
    if let Some(expected) = expected {
        expected.ensure_same(&geometry)?;
    }
    let name = std::str::from_utf8(take(bytes, &mut at, name_len)?)
        .map_err(|_| Error::format("ngf", "metric name is not utf-8"))?
        .to_owned();
    if name.is_empty() {
        return Err(Error::format("ngf", "empty metric name"));
    }
    let score = f64::from_le_bytes(take(bytes, &mut at, 8)?.try_into().unwrap());
    if !score.is_finite() {
        return Err(Error::format("ngf", "non-finite score"));
    }
    let data = take(bytes, &mut at, 4 * geometry.len())?
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
        .collect();
    let gradient = GradientField::new(geometry, data)?;
    Ok((MetricEvaluation { score, gradient }, name))
}

pub fn save_ngf(eval: &MetricEvaluation, name: &str, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_ngf(eval, name)?;
    write_atomic(path.as_ref(), &bytes)
}

pub fn load_ngf(
    path: impl AsRef<Path>,
    expected: Option<Geometry>,
) -> Result<(MetricEvaluation, String)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ngf(&bytes, expected)
}
