//! Linear synthesis: the sum of bilinearly upsampled latent grids, and its
//! exact adjoint.

use crate::image::Geometry;

/// Interpolation taps of one output coordinate: `(i0, i1, t)` meaning
/// `(1 - t) * in[i0] + t * in[i1]`.
type Taps = Vec<(usize, usize, f64)>;

fn axis_taps(n_out: usize, n_in: usize, scale: usize) -> Taps {
    let factor = (1usize << scale) as f64;
    (0..n_out)
        .map(|o| {
            let p = ((o as f64 + 0.5) / factor - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = p.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, p - i0 as f64)
        })
        .collect()
}

/// Grid side for `n` pixels at scale `s`: `ceil(n / 2^s)`.
pub fn grid_len(n: usize, scale: usize) -> usize {
    n.div_ceil(1 << scale)
}

#[derive(Clone, Debug)]
struct Level {
    h: usize,
    w: usize,
    rows: Taps,
    cols: Taps,
}

/// Synthesis operator for one image geometry and number of scales.
#[derive(Clone, Debug)]
pub struct Synthesis {
    geometry: Geometry,
    levels: Vec<Level>,
}

impl Synthesis {
    pub fn new(geometry: Geometry, scales: usize) -> Self {
        let (h, w) = (geometry.height, geometry.width);
        let levels = (0..scales)
            .map(|s| {
                let (hs, ws) = (grid_len(h, s), grid_len(w, s));
                Level {
                    h: hs,
                    w: ws,
                    rows: axis_taps(h, hs, s),
                    cols: axis_taps(w, ws, s),
                }
            })
            .collect();
        Synthesis { geometry, levels }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn scales(&self) -> usize {
        self.levels.len()
    }

    /// Samples per scale grid (all channels).
    pub fn grid_sizes(&self) -> Vec<usize> {
        self.levels
            .iter()
            .map(|l| l.h * l.w * self.geometry.channels)
            .collect()
    }

    /// `(height, width)` of the grid at `scale`.
    pub fn grid_shape(&self, scale: usize) -> (usize, usize) {
        (self.levels[scale].h, self.levels[scale].w)
    }

    /// Adds `U_s(grid)` into `out` (image-shaped, channel-planar).
    pub fn upsample_into(&self, scale: usize, grid: &[f64], out: &mut [f64]) {
        let l = &self.levels[scale];
        let (h, w) = (self.geometry.height, self.geometry.width);
        let mut tmp = vec![0.0; l.h * w];
        for c in 0..self.geometry.channels {
            let g = &grid[c * l.h * l.w..(c + 1) * l.h * l.w];
            for r in 0..l.h {
                let src = &g[r * l.w..(r + 1) * l.w];
                let dst = &mut tmp[r * w..(r + 1) * w];
                for (d, &(i0, i1, t)) in dst.iter_mut().zip(&l.cols) {
                    *d = (1.0 - t) * src[i0] + t * src[i1];
                }
            }
            let plane = &mut out[c * h * w..(c + 1) * h * w];
            for (r, &(i0, i1, t)) in l.rows.iter().enumerate() {
                let (a, b) = (&tmp[i0 * w..(i0 + 1) * w], &tmp[i1 * w..(i1 + 1) * w]);
                for ((o, x0), x1) in plane[r * w..(r + 1) * w].iter_mut().zip(a).zip(b) {
                    *o += (1.0 - t) * x0 + t * x1;
                }
            }
        }
    }

    /// `U_s^T(y)` for an image-shaped `y`.
    pub fn upsample_adjoint(&self, scale: usize, y: &[f64]) -> Vec<f64> {
        let l = &self.levels[scale];
        let (h, w) = (self.geometry.height, self.geometry.width);
        let mut grid = vec![0.0; l.h * l.w * self.geometry.channels];
        let mut tmp = vec![0.0; l.h * w];
        for c in 0..self.geometry.channels {
            tmp.iter_mut().for_each(|v| *v = 0.0);
            let plane = &y[c * h * w..(c + 1) * h * w];
            for (r, &(i0, i1, t)) in l.rows.iter().enumerate() {
                let row = &plane[r * w..(r + 1) * w];
                for (k, &v) in row.iter().enumerate() {
                    tmp[i0 * w + k] += (1.0 - t) * v;
                    tmp[i1 * w + k] += t * v;
                }
            }
            let g = &mut grid[c * l.h * l.w..(c + 1) * l.h * l.w];
            for r in 0..l.h {
                let src = &tmp[r * w..(r + 1) * w];
                let dst = &mut g[r * l.w..(r + 1) * l.w];
                for (&v, &(i0, i1, t)) in src.iter().zip(&l.cols) {
                    dst[i0] += (1.0 - t) * v;
                    dst[i1] += t * v;
                }
            }
        }
        grid
    }

    /// `sum_s U_s(grids[s])`.
    pub fn synthesize(&self, grids: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.geometry.len()];
        for (s, g) in grids.iter().enumerate() {
            self.upsample_into(s, g, &mut out);
        }
        out
    }

    /// Adjoint of `synthesize`: one grid per scale.
    pub fn adjoint(&self, y: &[f64]) -> Vec<Vec<f64>> {
        (0..self.scales())
            .map(|s| self.upsample_adjoint(s, y))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn random(n: usize, s: &mut Stream) -> Vec<f64> {
        (0..n).map(|_| s.normal()).collect()
    }

    #[test]
    fn scale_zero_is_identity() {
        let g = Geometry::new(7, 5, 3).unwrap();
        let syn = Synthesis::new(g, 3);
        let mut s = Stream::new(1, 1);
        let l0 = random(g.len(), &mut s);
        let grids = vec![
            l0.clone(),
            vec![0.0; syn.grid_sizes()[1]],
            vec![0.0; syn.grid_sizes()[2]],
        ];
        assert_eq!(syn.synthesize(&grids), l0);
    }

    #[test]
    fn adjoint_dot_test() {
        for (w, h) in [(16, 16), (13, 9), (1, 5)] {
            let g = Geometry::new(w, h, 3).unwrap();
            let syn = Synthesis::new(g, 4);
            let mut s = Stream::new(w as u64, h as u64);
            for scale in 0..4 {
                let l = random(syn.grid_sizes()[scale], &mut s);
                let y = random(g.len(), &mut s);
                let mut ul = vec![0.0; g.len()];
                syn.upsample_into(scale, &l, &mut ul);
                let lhs: f64 = ul.iter().zip(&y).map(|(a, b)| a * b).sum();
                let rhs: f64 = l
                    .iter()
                    .zip(syn.upsample_adjoint(scale, &y))
                    .map(|(a, b)| a * b)
                    .sum();
                assert!((lhs - rhs).abs() < 1e-10, "{w}x{h} scale {scale}");
            }
        }
    }

    #[test]
    fn constant_grids_upsample_to_constants() {
        let g = Geometry::new(20, 12, 1).unwrap();
        let syn = Synthesis::new(g, 4);
        let mut out = vec![0.0; g.len()];
        syn.upsample_into(3, &vec![0.25; syn.grid_sizes()[3]], &mut out);
        assert!(out.iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert_eq!(syn.grid_shape(2), (3, 5));
    }
}
