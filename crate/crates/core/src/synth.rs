//! Deterministic test content: a procedural image corpus and synthetic
//! user-generated-content degradations (sensor noise, prior compression).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::blockcodec::{encode_fixed, Partition};
use crate::error::{Error, Result};
use crate::image::{Geometry, Image};
use crate::rng::Stream;
use crate::smoothing::gaussian_field;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Degradation {
    /// Additive N(0, sigma^2) per sample, then clamp.
    GaussianNoise { sigma: f64 },
    /// Round trip through the block codec at a fixed QP.
    Precompressed { qp: i32 },
    /// Noise first, then compression.
    Both { sigma: f64, qp: i32 },
}

/// Key separating degradation noise from smoothing noise of the same seed.
const UGC_STREAM: u64 = 0x7567_6300_0000_0000;

fn add_noise(img: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!(
            "noise sigma {sigma} must be finite and >= 0"
        )));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let noise = gaussian_field(img.geometry(), sigma, seed, UGC_STREAM);
    Ok(img.offset_by(&noise, 1.0)?.clamped())
}

fn precompress(img: &Image, qp: i32) -> Result<Image> {
    Ok(encode_fixed(img, qp, Partition::Whole16)?.1)
}

pub fn synth_ugc(img: &Image, degradation: Degradation, seed: u64) -> Result<Image> {
    match degradation {
        Degradation::GaussianNoise { sigma } => add_noise(img, sigma, seed),
        Degradation::Precompressed { qp } => precompress(img, qp),
        Degradation::Both { sigma, qp } => precompress(&add_noise(img, sigma, seed)?, qp),
    }
}

/// Number of distinct corpus pattern families.
pub const PATTERN_FAMILIES: usize = 5;

/// Smooth random field: bilinear interpolation of a random lattice.
fn value_noise(s: &mut Stream, w: usize, h: usize, cell: f64) -> Vec<f64> {
    let gw = (w as f64 / cell).ceil() as usize + 2;
    let gh = (h as f64 / cell).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..gw * gh).map(|_| s.uniform()).collect();
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let (fy, fx) = (r as f64 / cell, c as f64 / cell);
            let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
            let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
            // Smoothstep weights avoid visible lattice creases.
            let (ty, tx) = (ty * ty * (3.0 - 2.0 * ty), tx * tx * (3.0 - 2.0 * tx));
            let at = |y: usize, x: usize| lattice[y * gw + x];
            let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
            let bottom = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

fn pattern(family: usize, s: &mut Stream, w: usize, h: usize) -> Vec<f64> {
    let (wf, hf) = (w as f64, h as f64);
    match family {
        0 => {
            let cell = 6.0 + 10.0 * s.uniform();
            value_noise(s, w, h, cell)
        }
        1 => {
            let angle = PI * s.uniform();
            let period = 5.0 + 12.0 * s.uniform();
            let (ca, sa) = (angle.cos(), angle.sin());
            let tilt = s.uniform() - 0.5;
            let mut out = Vec::with_capacity(w * h);
            for r in 0..h {
                for c in 0..w {
                    let u = (c as f64 * ca + r as f64 * sa) / period;
                    let ramp = tilt * (c as f64 / wf - 0.5);
                    out.push(0.5 + 0.3 * (2.0 * PI * u).sin() + ramp);
                }
            }
            out
        }
        2 => {
            let mut out: Vec<f64> = (0..w * h)
                .map(|i| 0.3 + 0.4 * ((i % w) as f64 / wf) * ((i / w) as f64 / hf))
                .collect();
            for _ in 0..6 {
                let (cy, cx) = (hf * s.uniform(), wf * s.uniform());
                let radius = (0.08 + 0.2 * s.uniform()) * wf.min(hf);
                let value = s.uniform();
                let square = s.uniform() < 0.5;
                for r in 0..h {
                    for c in 0..w {
                        let (dy, dx) = (r as f64 + 0.5 - cy, c as f64 + 0.5 - cx);
                        let inside = if square {
                            dy.abs() < radius && dx.abs() < radius
                        } else {
                            dy * dy + dx * dx < radius * radius
                        };
                        if inside {
                            out[r * w + c] = value;
                        }
                    }
                }
            }
            out
        }
        3 => {
            let k = (0.3 + 0.5 * s.uniform()) / wf.max(hf);
            let (cy, cx) = (hf * s.uniform(), wf * s.uniform());
            let mut out = Vec::with_capacity(w * h);
            for r in 0..h {
                for c in 0..w {
                    let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
                    out.push(0.5 + 0.35 * (PI * k * d2).cos());
                }
            }
            out
        }
        _ => {
            let mut out = vec![0.0; w * h];
            let mut amp = 0.5;
            for cell in [16.0, 8.0, 4.0, 2.0] {
                for (o, v) in out.iter_mut().zip(value_noise(s, w, h, cell)) {
                    *o += amp * v;
                }
                amp *= 0.55;
            }
            out
        }
    }
}

fn normalize(v: &mut [f64], lo: f64, hi: f64) {
    let (min, max) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let span = (max - min).max(1e-12);
    for x in v {
        *x = lo + (hi - lo) * (*x - min) / span;
    }
}

/// Corpus image `index`: families cycle with the index, parameters are
/// drawn from a stream keyed on it.
pub fn corpus_image(index: usize, geometry: Geometry) -> Image {
    let (w, h) = (geometry.width, geometry.height);
    let mut s = Stream::new(index as u64, 0x636f_7270);
    let mut luma = pattern(index % PATTERN_FAMILIES, &mut s, w, h);
    normalize(&mut luma, 0.08, 0.92);
    let mut data = Vec::with_capacity(geometry.len());
    if geometry.channels == 1 {
        data = luma;
    } else {
        for _ in 0..3 {
            let gain = 0.7 + 0.3 * s.uniform();
            let offset = 0.15 * (s.uniform() - 0.5);
            let mut tint = value_noise(&mut s, w, h, 24.0);
            normalize(&mut tint, -0.08, 0.08);
            data.extend(
                luma.iter()
                    .zip(&tint)
                    .map(|(l, t)| (gain * l + offset + t).clamp(0.0, 1.0)),
            );
        }
    }
    Image::new(geometry, data).expect("corpus samples lie in [0, 1]")
}

pub fn corpus(count: usize, geometry: Geometry) -> Vec<Image> {
    (0..count).map(|i| corpus_image(i, geometry)).collect()
}
