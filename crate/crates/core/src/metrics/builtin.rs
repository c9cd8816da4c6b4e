//! Closed-form no-reference metrics with exact adjoint gradients. All use the
//! loss convention: lower is better.

use crate::error::Result;
use crate::image::{GradientField, Image};

use super::Metric;

/// Charbonnier smoothing constant of the total-variation metric.
pub const CHARBONNIER_EPS: f64 = 1e-3;
/// Grid period the blockiness metric inspects.
pub const BLOCK_GRID: usize = 8;

/// Mean Charbonnier total variation with forward differences (zero across
/// the last row and column). Penalizes noise.
#[derive(Clone, Copy, Debug, Default)]
pub struct TvCharbonnier;

impl TvCharbonnier {
    fn run(x: &Image, grad: Option<&mut [f64]>) -> f64 {
        let (w, h) = (x.width(), x.height());
        let inv_n = 1.0 / x.len() as f64;
        let eps2 = CHARBONNIER_EPS * CHARBONNIER_EPS;
        let mut total = 0.0;
        match grad {
            None => {
                for c in 0..x.channels() {
                    let p = x.plane(c);
                    for r in 0..h {
                        let row = &p[r * w..(r + 1) * w];
                        let next = (r + 1 < h).then(|| &p[(r + 1) * w..(r + 2) * w]);
                        for col in 0..w {
                            let v = row[col];
                            let dh = if col + 1 < w { row[col + 1] - v } else { 0.0 };
                            let dv = next.map_or(0.0, |n| n[col] - v);
                            total += (dh * dh + dv * dv + eps2).sqrt() - CHARBONNIER_EPS;
                        }
                    }
                }
            }
            Some(g) => {
                let n = w * h;
                for c in 0..x.channels() {
                    let p = x.plane(c);
                    let gp = &mut g[c * n..(c + 1) * n];
                    for r in 0..h {
                        for col in 0..w {
                            let i = r * w + col;
                            let v = p[i];
                            let dh = if col + 1 < w { p[i + 1] - v } else { 0.0 };
                            let dv = if r + 1 < h { p[i + w] - v } else { 0.0 };
                            let s = (dh * dh + dv * dv + eps2).sqrt();
                            total += s - CHARBONNIER_EPS;
                            let (gh, gv) = (dh / s * inv_n, dv / s * inv_n);
                            if col + 1 < w {
                                gp[i + 1] += gh;
                                gp[i] -= gh;
                            }
                            if r + 1 < h {
                                gp[i + w] += gv;
                                gp[i] -= gv;
                            }
                        }
                    }
                }
            }
        }
        // Summing excess over eps keeps flat regions exact.
        CHARBONNIER_EPS + total * inv_n
    }
}

impl Metric for TvCharbonnier {
    fn name(&self) -> &str {
        "tv-charbonnier"
    }

    fn score(&self, x: &Image) -> Result<f64> {
        Ok(Self::run(x, None))
    }

    fn grad(&self, x: &Image) -> Result<GradientField> {
        let mut g = vec![0.0; x.len()];
        Self::run(x, Some(&mut g));
        Ok(GradientField::from_vec_unchecked(x.geometry(), g))
    }
}

/// Negated mean squared Laplacian response, 3x3 kernel
/// `[[0,1,0],[1,-4,1],[0,1,0]]` with reflect padding. Rewards sharpness.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sharpness;

/// Mirror index without edge duplication (`-1 -> 1`, `n -> n - 2`).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let j = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    j as usize
}

impl Sharpness {
    const TAPS: [(isize, isize, f64); 5] = [
        (0, 0, -4.0),
        (-1, 0, 1.0),
        (1, 0, 1.0),
        (0, -1, 1.0),
        (0, 1, 1.0),
    ];

    /// Laplacian response of one plane.
    pub fn laplacian(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
        let mut out = vec![0.0; w * h];
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for &(dr, dc, k) in &Self::TAPS {
                    let rr = reflect(r as isize + dr, h);
                    let cc = reflect(c as isize + dc, w);
                    acc += k * plane[rr * w + cc];
                }
                out[r * w + c] = acc;
            }
        }
        out
    }
}

impl Metric for Sharpness {
    fn name(&self) -> &str {
        "sharpness"
    }

    fn score(&self, x: &Image) -> Result<f64> {
        let (w, h) = (x.width(), x.height());
        let total: f64 = (0..x.channels())
            .map(|c| {
                Self::laplacian(x.plane(c), w, h)
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
            })
            .sum();
        Ok(-total / x.len() as f64)
    }

    fn grad(&self, x: &Image) -> Result<GradientField> {
        let (w, h) = (x.width(), x.height());
        let n = w * h;
        let scale = -2.0 / x.len() as f64;
        let mut g = vec![0.0; x.len()];
        for c in 0..x.channels() {
            let resp = Self::laplacian(x.plane(c), w, h);
            let gp = &mut g[c * n..(c + 1) * n];
            // Adjoint of the padded convolution: scatter each response back
            // through the same reflected taps.
            for r in 0..h {
                for col in 0..w {
                    let y = scale * resp[r * w + col];
                    for &(dr, dc, k) in &Self::TAPS {
                        let rr = reflect(r as isize + dr, h);
                        let cc = reflect(col as isize + dc, w);
                        gp[rr * w + cc] += k * y;
                    }
                }
            }
        }
        Ok(GradientField::from_vec_unchecked(x.geometry(), g))
    }
}

/// Mean squared step across the 8-pixel block grid, horizontally and
/// vertically. Penalizes blocking artifacts.
#[derive(Clone, Copy, Debug, Default)]
pub struct Blockiness;

impl Blockiness {
    fn pair_count(w: usize, h: usize) -> usize {
        let vertical_edges = (w - 1) / BLOCK_GRID;
        let horizontal_edges = (h - 1) / BLOCK_GRID;
        vertical_edges * h + horizontal_edges * w
    }

    fn run(x: &Image, mut grad: Option<&mut [f64]>) -> f64 {
        let (w, h) = (x.width(), x.height());
        let pairs = Self::pair_count(w, h) * x.channels();
        if pairs == 0 {
            return 0.0;
        }
        let inv = 1.0 / pairs as f64;
        let n = w * h;
        let mut total = 0.0;
        for c in 0..x.channels() {
            let p = x.plane(c);
            let mut visit = |a: usize, b: usize, total: &mut f64| {
                let d = p[a] - p[b];
                *total += d * d;
                if let Some(g) = grad.as_deref_mut() {
                    g[c * n + a] += 2.0 * d * inv;
                    g[c * n + b] -= 2.0 * d * inv;
                }
            };
            for r in 0..h {
                for col in (BLOCK_GRID..w).step_by(BLOCK_GRID) {
                    visit(r * w + col - 1, r * w + col, &mut total);
                }
            }
            for r in (BLOCK_GRID..h).step_by(BLOCK_GRID) {
                for col in 0..w {
                    visit((r - 1) * w + col, r * w + col, &mut total);
                }
            }
        }
        total * inv
    }
}

impl Metric for Blockiness {
    fn name(&self) -> &str {
        "blockiness"
    }

    fn score(&self, x: &Image) -> Result<f64> {
        Ok(Self::run(x, None))
    }

    fn grad(&self, x: &Image) -> Result<GradientField> {
        let mut g = vec![0.0; x.len()];
        Self::run(x, Some(&mut g));
        Ok(GradientField::from_vec_unchecked(x.geometry(), g))
    }
}
