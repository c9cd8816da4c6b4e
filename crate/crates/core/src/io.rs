//! Image files: binary PGM/PPM (maxval 255) and the raw `.imgf32` format.
//!
//! `.imgf32` layout, little-endian: `"IMGF"`, u32 width, u32 height,
//! u32 channels, then `width * height * channels` f32 samples, channel-planar
//! and row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{Geometry, Image};

pub const IMGF32_MAGIC: &[u8; 4] = b"IMGF";

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = match dir {
        Some(d) => d.join(&tmp_name),
        None => tmp_name.into(),
    };
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Parses PGM (P5), PPM (P6) or `.imgf32` bytes, chosen by magic.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    match bytes.get(..2) {
        Some(b"P5") => decode_pnm(bytes, 1),
        Some(b"P6") => decode_pnm(bytes, 3),
        _ if bytes.starts_with(IMGF32_MAGIC) => decode_imgf32(bytes),
        _ => Err(Error::format("image", "bad magic")),
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format("pnm header", "expected a number"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format("pnm header", "number out of range"))
    }
}

fn decode_pnm(bytes: &[u8], channels: usize) -> Result<Image> {
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number()?;
    let height = cur.number()?;
    let maxval = cur.number()?;
    if maxval != 255 {
        return Err(Error::format(
            "pnm header",
            format!("maxval {maxval} != 255"),
        ));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::format("pnm header", "missing raster separator")),
    }
    let geometry = Geometry::new(width, height, channels)?;
    let raster = &bytes[cur.pos..];
    if raster.len() < geometry.len() {
        return Err(Error::format(
            "pnm raster",
            format!("truncated: {} of {} bytes", raster.len(), geometry.len()),
        ));
    }
    let n = geometry.plane_len();
    let mut data = vec![0.0; geometry.len()];
    for i in 0..n {
        for c in 0..channels {
            data[c * n + i] = f64::from(raster[i * channels + c]) / 255.0;
        }
    }
    Image::new(geometry, data)
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format("imgf32 header", "truncated"))
}

fn decode_imgf32(bytes: &[u8]) -> Result<Image> {
    let width = read_u32(bytes, 4)? as usize;
    let height = read_u32(bytes, 8)? as usize;
    let channels = read_u32(bytes, 12)? as usize;
    let geometry = Geometry::new(width, height, channels)?;
    let payload = &bytes[16..];
    if payload.len() < geometry.len() * 4 {
        return Err(Error::format(
            "imgf32 payload",
            format!(
                "truncated: {} of {} bytes",
                payload.len(),
                geometry.len() * 4
            ),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .take(geometry.len())
        .map(|b| {
            let v = f64::from(f32::from_le_bytes(b.try_into().unwrap()));
            // NaN maps to 0 so the [0, 1] invariant holds for every load.
            if v.is_nan() {
                0.0
            } else {
                v.clamp(0.0, 1.0)
            }
        })
        .collect();
    Image::new(geometry, data)
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Serializes by extension: `.pgm` (1 channel), `.ppm` (3 channels), anything
/// else as `.imgf32`.
pub fn encode_image(img: &Image, path: &Path) -> Result<Vec<u8>> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pgm") | Some("ppm") => {
            let want = if ext.as_deref() == Some("pgm") { 1 } else { 3 };
            if img.channels() != want {
                return Err(Error::invalid(format!(
                    "cannot store {}-channel image as {}",
                    img.channels(),
                    ext.unwrap()
                )));
            }
            let magic = if want == 1 { "P5" } else { "P6" };
            let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
            let n = img.geometry().plane_len();
            out.reserve(img.len());
            for i in 0..n {
                for c in 0..want {
                    out.push(to_byte(img.data()[c * n + i]));
                }
            }
            Ok(out)
        }
        _ => Ok(encode_imgf32(img)),
    }
}

pub fn encode_imgf32(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * img.len());
    out.extend_from_slice(IMGF32_MAGIC);
    for v in [img.width(), img.height(), img.channels()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for &v in img.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_image(img, path)?;
    write_atomic(path, &bytes)
}
