//! Orthonormal 2-D DCT-II on square blocks and zigzag scans.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Block edges supported by the codec.
pub const BLOCK_SIZES: [usize; 2] = [4, 16];

struct Basis {
    n: usize,
    // Row k holds the k-th basis vector.
    c: Vec<f64>,
    zigzag: Vec<usize>,
}

fn build_basis(n: usize) -> Basis {
    let mut c = vec![0.0; n * n];
    for k in 0..n {
        let a = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for i in 0..n {
            c[k * n + i] =
                a * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    Basis {
        n,
        c,
        zigzag: build_zigzag(n),
    }
}

/// JPEG-style diagonal scan: anti-diagonals in increasing order, alternating
/// direction, starting with the DC coefficient.
fn build_zigzag(n: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(n * n);
    for s in 0..(2 * n - 1) {
        let lo = s.saturating_sub(n - 1);
        let hi = s.min(n - 1);
        if s % 2 == 0 {
            // Up-right: row decreasing.
            for r in (lo..=hi).rev() {
                order.push(r * n + (s - r));
            }
        } else {
            for r in lo..=hi {
                order.push(r * n + (s - r));
            }
        }
    }
    order
}

fn basis(n: usize) -> Result<&'static Basis> {
    static B4: OnceLock<Basis> = OnceLock::new();
    static B16: OnceLock<Basis> = OnceLock::new();
    match n {
        4 => Ok(B4.get_or_init(|| build_basis(4))),
        16 => Ok(B16.get_or_init(|| build_basis(16))),
        _ => Err(Error::invalid(format!("unsupported block size {n}"))),
    }
}

fn block_size(len: usize) -> Result<usize> {
    match len {
        16 => Ok(4),
        256 => Ok(16),
        _ => Err(Error::invalid(format!(
            "block of {len} samples is not 4x4 or 16x16"
        ))),
    }
}

// Forward: C X C^T. Inverse: C^T Y C.
fn sandwich(basis: &Basis, x: &[f64], inverse: bool, out: &mut [f64]) {
    let n = basis.n;
    let c = &basis.c;
    let mut tmp = vec![0.0; n * n];
    if !inverse {
        // tmp = C * X
        for k in 0..n {
            let ck = &c[k * n..(k + 1) * n];
            let row = &mut tmp[k * n..(k + 1) * n];
            for (i, &w) in ck.iter().enumerate() {
                let xi = &x[i * n..(i + 1) * n];
                for (t, &v) in row.iter_mut().zip(xi) {
                    *t += w * v;
                }
            }
        }
        // out = tmp * C^T
        for r in 0..n {
            let tr = &tmp[r * n..(r + 1) * n];
            for k in 0..n {
                let ck = &c[k * n..(k + 1) * n];
                out[r * n + k] = tr.iter().zip(ck).map(|(a, b)| a * b).sum();
            }
        }
    } else {
        // tmp = C^T * Y
        for k in 0..n {
            let yk = &x[k * n..(k + 1) * n];
            for i in 0..n {
                let w = c[k * n + i];
                let row = &mut tmp[i * n..(i + 1) * n];
                for (t, &v) in row.iter_mut().zip(yk) {
                    *t += w * v;
                }
            }
        }
        // out = tmp * C
        for r in 0..n {
            let o = &mut out[r * n..(r + 1) * n];
            o.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..n {
                let w = tmp[r * n + k];
                let ck = &c[k * n..(k + 1) * n];
                for (a, &b) in o.iter_mut().zip(ck) {
                    *a += w * b;
                }
            }
        }
    }
}

/// Forward orthonormal DCT-II of a row-major square block (4x4 or 16x16).
pub fn dct2(block: &[f64]) -> Result<Vec<f64>> {
    let b = basis(block_size(block.len())?)?;
    let mut out = vec![0.0; block.len()];
    sandwich(b, block, false, &mut out);
    Ok(out)
}

/// Exact inverse of [`dct2`].
pub fn idct2(coeffs: &[f64]) -> Result<Vec<f64>> {
    let b = basis(block_size(coeffs.len())?)?;
    let mut out = vec![0.0; coeffs.len()];
    sandwich(b, coeffs, true, &mut out);
    Ok(out)
}

/// Raster index of each zigzag position for an `n x n` block.
pub fn zigzag(n: usize) -> Result<&'static [usize]> {
    Ok(&basis(n)?.zigzag)
}
