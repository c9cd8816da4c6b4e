//! Planar floating-point pixel containers and the elementary full-reference
//! measures built on them.
//!
//! Samples are `f64`, channel-planar and row-major within each plane. Decoded
//! and loaded images live in `[0, 1]`; training intermediates and perturbed
//! copies may leave that range, so construction does not clamp.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Macroblock edge; images are padded to a multiple of this before coding.
pub const MACROBLOCK: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Geometry {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl Geometry {
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        Ok(Geometry {
            width,
            height,
            channels,
        })
    }

    /// Samples per plane.
    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    /// Total sample count, `n_p` in the calibration formulas.
    pub fn len(&self) -> usize {
        self.plane_len() * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ensure_same(&self, other: &Geometry) -> Result<()> {
        if self != other {
            return Err(Error::Geometry {
                expected: *self,
                found: *other,
            });
        }
        Ok(())
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.width, self.height, self.channels)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    geometry: Geometry,
    data: Vec<f64>,
}

impl Image {
    pub fn new(geometry: Geometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::invalid(format!(
                "sample count {} does not match geometry {geometry}",
                data.len()
            )));
        }
        Ok(Image { geometry, data })
    }

    pub fn from_fn(geometry: Geometry, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(geometry.len());
        for c in 0..geometry.channels {
            for r in 0..geometry.height {
                for col in 0..geometry.width {
                    data.push(f(c, r, col));
                }
            }
        }
        Image { geometry, data }
    }

    pub fn filled(geometry: Geometry, value: f64) -> Self {
        Image {
            geometry,
            data: vec![value; geometry.len()],
        }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn channels(&self) -> usize {
        self.geometry.channels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.geometry.plane_len();
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut [f64] {
        let n = self.geometry.plane_len();
        &mut self.data[channel * n..(channel + 1) * n]
    }

    #[inline]
    pub fn at(&self, channel: usize, row: usize, col: usize) -> f64 {
        let g = &self.geometry;
        self.data[(channel * g.height + row) * g.width + col]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, row: usize, col: usize, value: f64) {
        let g = self.geometry;
        self.data[(channel * g.height + row) * g.width + col] = value;
    }

    pub fn clamped(&self) -> Image {
        Image {
            geometry: self.geometry,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    /// `self + scale * field`, used to build perturbed inputs.
    pub fn offset_by(&self, field: &GradientField, scale: f64) -> Result<Image> {
        self.geometry.ensure_same(&field.geometry())?;
        Ok(Image {
            geometry: self.geometry,
            data: self
                .data
                .iter()
                .zip(field.data())
                .map(|(x, n)| x + scale * n)
                .collect(),
        })
    }

    /// Pads right and bottom edges by replication to the next multiple of `m`.
    pub fn pad_to_multiple(&self, m: usize) -> Image {
        let g = self.geometry;
        let w = g.width.div_ceil(m) * m;
        let h = g.height.div_ceil(m) * m;
        if w == g.width && h == g.height {
            return self.clone();
        }
        let geometry = Geometry {
            width: w,
            height: h,
            channels: g.channels,
        };
        Image::from_fn(geometry, |c, r, col| {
            self.at(c, r.min(g.height - 1), col.min(g.width - 1))
        })
    }

    /// Top-left `width x height` window.
    pub fn crop(&self, width: usize, height: usize) -> Result<Image> {
        let g = self.geometry;
        if width == 0 || height == 0 || width > g.width || height > g.height {
            return Err(Error::invalid(format!(
                "crop {width}x{height} outside {}x{}",
                g.width, g.height
            )));
        }
        let geometry = Geometry {
            width,
            height,
            channels: g.channels,
        };
        Ok(Image::from_fn(geometry, |c, r, col| self.at(c, r, col)))
    }

    pub fn block(
        &self,
        channel: usize,
        row: usize,
        col: usize,
        size: usize,
    ) -> Result<BlockView<'_>> {
        let g = self.geometry;
        if channel >= g.channels || row + size > g.height || col + size > g.width {
            return Err(Error::invalid(format!(
                "block {size}x{size} at ({row},{col}) channel {channel} outside {g}"
            )));
        }
        Ok(BlockView {
            image: self,
            row,
            col,
            size,
            channel,
        })
    }

    /// All `size x size` blocks, channel-major then raster order. The image
    /// dimensions must be multiples of `size`.
    pub fn blocks(&self, size: usize) -> Result<Vec<BlockView<'_>>> {
        let g = self.geometry;
        if !g.width.is_multiple_of(size) || !g.height.is_multiple_of(size) {
            return Err(Error::invalid(format!(
                "{g} is not tileable by {size}x{size} blocks"
            )));
        }
        let mut out = Vec::with_capacity(g.len() / (size * size));
        for c in 0..g.channels {
            for r in (0..g.height).step_by(size) {
                for col in (0..g.width).step_by(size) {
                    out.push(BlockView {
                        image: self,
                        row: r,
                        col,
                        size,
                        channel: c,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Writes row-major `samples` into the square block at (`row`, `col`).
    pub fn put_block(
        &mut self,
        channel: usize,
        row: usize,
        col: usize,
        size: usize,
        samples: &[f64],
    ) {
        debug_assert_eq!(samples.len(), size * size);
        let w = self.geometry.width;
        let plane = self.plane_mut(channel);
        for (i, src) in samples.chunks_exact(size).enumerate() {
            let start = (row + i) * w + col;
            plane[start..start + size].copy_from_slice(src);
        }
    }
}

/// A square window into one plane of an [`Image`].
#[derive(Clone, Copy, Debug)]
pub struct BlockView<'a> {
    image: &'a Image,
    pub row: usize,
    pub col: usize,
    pub size: usize,
    pub channel: usize,
}

impl BlockView<'_> {
    /// Row-major copy of the block samples.
    pub fn samples(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.size * self.size);
        self.copy_into(&mut out);
        out
    }

    pub fn copy_into(&self, out: &mut Vec<f64>) {
        out.clear();
        let w = self.image.width();
        let plane = self.image.plane(self.channel);
        for r in self.row..self.row + self.size {
            out.extend_from_slice(&plane[r * w + self.col..r * w + self.col + self.size]);
        }
    }
}

/// Per-sample field with image geometry: metric gradients, noise draws.
/// Entries are always finite.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    geometry: Geometry,
    data: Vec<f64>,
}

impl GradientField {
    pub fn new(geometry: Geometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::invalid(format!(
                "gradient sample count {} does not match geometry {geometry}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        Ok(GradientField { geometry, data })
    }

    pub fn zeros(geometry: Geometry) -> Self {
        GradientField {
            geometry,
            data: vec![0.0; geometry.len()],
        }
    }

    /// Builds a field from values already known to be finite.
    pub(crate) fn from_vec_unchecked(geometry: Geometry, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), geometry.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        GradientField { geometry, data }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.geometry.plane_len();
        &self.data[channel * n..(channel + 1) * n]
    }

    #[inline]
    pub fn at(&self, channel: usize, row: usize, col: usize) -> f64 {
        let g = &self.geometry;
        self.data[(channel * g.height + row) * g.width + col]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        debug_assert_eq!(self.data.len(), other.len());
        self.data.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, factor: f64) -> GradientField {
        GradientField {
            geometry: self.geometry,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &GradientField, factor: f64) -> Result<()> {
        self.geometry.ensure_same(&other.geometry)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn pad_to_multiple(&self, m: usize) -> GradientField {
        let g = self.geometry;
        let w = g.width.div_ceil(m) * m;
        let h = g.height.div_ceil(m) * m;
        if w == g.width && h == g.height {
            return self.clone();
        }
        // Replicated samples are not part of the source image; they carry no
        // metric sensitivity.
        let mut data = vec![0.0; w * h * g.channels];
        for c in 0..g.channels {
            for r in 0..g.height {
                for col in 0..g.width {
                    data[(c * h + r) * w + col] = self.at(c, r, col);
                }
            }
        }
        GradientField {
            geometry: Geometry {
                width: w,
                height: h,
                channels: g.channels,
            },
            data,
        }
    }
}

/// Sum of squared differences.
pub fn sse(a: &Image, b: &Image) -> Result<f64> {
    a.geometry.ensure_same(&b.geometry)?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

/// PSNR in dB with peak 1.0; `f64::INFINITY` for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let e = sse(a, b)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = e / a.len() as f64;
    Ok(10.0 * (1.0 / mse).log10())
}

// BT.601 full-range. Chroma is offset by 0.5 so every plane stays in [0, 1].
const KR: f64 = 0.299;
const KB: f64 = 0.114;
const KG: f64 = 1.0 - KR - KB;
const CB_SCALE: f64 = 2.0 * (1.0 - KB);
const CR_SCALE: f64 = 2.0 * (1.0 - KR);

/// RGB -> Y'CbCr (BT.601 full range). Grayscale images pass through.
pub fn rgb_to_ycbcr(img: &Image) -> Image {
    if img.channels() == 1 {
        return img.clone();
    }
    let n = img.geometry.plane_len();
    let mut out = vec![0.0; 3 * n];
    for i in 0..n {
        let (r, g, b) = (img.data[i], img.data[n + i], img.data[2 * n + i]);
        let y = KR * r + KG * g + KB * b;
        out[i] = y;
        out[n + i] = 0.5 + (b - y) / CB_SCALE;
        out[2 * n + i] = 0.5 + (r - y) / CR_SCALE;
    }
    Image {
        geometry: img.geometry,
        data: out,
    }
}

/// Inverse of [`rgb_to_ycbcr`], without clamping.
pub fn ycbcr_to_rgb(img: &Image) -> Image {
    if img.channels() == 1 {
        return img.clone();
    }
    let n = img.geometry.plane_len();
    let mut out = vec![0.0; 3 * n];
    for i in 0..n {
        let (y, cb, cr) = (
            img.data[i],
            img.data[n + i] - 0.5,
            img.data[2 * n + i] - 0.5,
        );
        let r = y + CR_SCALE * cr;
        let b = y + CB_SCALE * cb;
        let g = (y - KR * r - KB * b) / KG;
        out[i] = r;
        out[n + i] = g;
        out[2 * n + i] = b;
    }
    Image {
        geometry: img.geometry,
        data: out,
    }
}

/// Maps an RGB-domain gradient into the Y'CbCr coding domain, so that
/// `<g_rgb, d_rgb> == <g_ycc, d_ycc>` for any Y'CbCr displacement `d_ycc`.
pub fn gradient_to_ycbcr(g: &GradientField) -> GradientField {
    if g.geometry.channels == 1 {
        return g.clone();
    }
    let n = g.geometry.plane_len();
    let mut out = vec![0.0; 3 * n];
    // Columns of d(rgb)/d(y, cb, cr).
    let dg_dcb = -KB * CB_SCALE / KG;
    let dg_dcr = -KR * CR_SCALE / KG;
    for i in 0..n {
        let (gr, gg, gb) = (g.data[i], g.data[n + i], g.data[2 * n + i]);
        out[i] = gr + gg + gb;
        out[n + i] = gg * dg_dcb + gb * CB_SCALE;
        out[2 * n + i] = gr * CR_SCALE + gg * dg_dcr;
    }
    GradientField::from_vec_unchecked(g.geometry, out)
}
