//! Bjontegaard delta rate between two rate-quality curves.

use crate::error::{Error, Result};

/// Composite Simpson intervals used to integrate the fitted curves.
pub const SIMPSON_INTERVALS: usize = 200;
/// Overlaps narrower than this fraction of the joint quality range are rejected.
pub const MIN_OVERLAP: f64 = 1e-6;
const DEGREE: usize = 3;

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting. `a` is row-major `n x n`.
fn solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
            .unwrap();
        if a[p * n + k].abs() < 1e-300 {
            return Err(Error::invalid(
                "singular fit: quality values not distinct enough",
            ));
        }
        if p != k {
            for c in 0..n {
                a.swap(k * n + c, p * n + c);
            }
            b.swap(k, p);
        }
        for i in k + 1..n {
            let f = a[i * n + k] / a[k * n + k];
            for c in k..n {
                a[i * n + c] -= f * a[k * n + c];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| a[k * n + c] * x[c]).sum();
        x[k] = (b[k] - s) / a[k * n + k];
    }
    Ok(x)
}

/// Least-squares cubic `y(t)` through `(t, y)` points, coefficients by
/// ascending power, via the normal equations.
fn fit_cubic(t: &[f64], y: &[f64]) -> Result<[f64; DEGREE + 1]> {
    let m = DEGREE + 1;
    let mut ata = vec![0.0; m * m];
    let mut aty = vec![0.0; m];
    for (&ti, &yi) in t.iter().zip(y) {
        let pows: Vec<f64> = (0..m).map(|k| ti.powi(k as i32)).collect();
        for r in 0..m {
            aty[r] += pows[r] * yi;
            for c in 0..m {
                ata[r * m + c] += pows[r] * pows[c];
            }
        }
    }
    let x = solve(ata, aty)?;
    Ok([x[0], x[1], x[2], x[3]])
}

fn eval(p: &[f64; DEGREE + 1], t: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let n = SIMPSON_INTERVALS;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Validates a curve of `(rate, quality)` points and returns it sorted by
/// rate.
fn prepare(points: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    if points.len() < DEGREE + 1 {
        return Err(Error::invalid(format!(
            "bd-rate needs at least {} points per curve, got {}",
            DEGREE + 1,
            points.len()
        )));
    }
    if points
        .iter()
        .any(|&(r, q)| !(r.is_finite() && r > 0.0 && q.is_finite()))
    {
        return Err(Error::invalid(
            "bd-rate needs positive finite rates and finite qualities",
        ));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let rising = sorted.windows(2).all(|w| w[1].1 > w[0].1);
    let falling = sorted.windows(2).all(|w| w[1].1 < w[0].1);
    if !(rising || falling) {
        return Err(Error::NonMonotone);
    }
    Ok(sorted)
}

/// Average rate difference of `test` relative to `reference` at equal
/// quality, in percent (negative means `test` saves rate). Points are
/// `(rate, quality)`; any positive rate unit works (bits, bpp).
pub fn bd_rate(reference: &[(f64, f64)], test: &[(f64, f64)]) -> Result<f64> {
    let a = prepare(reference)?;
    let b = prepare(test)?;
    let q_min = a
        .iter()
        .chain(&b)
        .map(|p| p.1)
        .fold(f64::INFINITY, f64::min);
    let q_max = a
        .iter()
        .chain(&b)
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let span = q_max - q_min;
    let lo = a
        .iter()
        .map(|p| p.1)
        .fold(f64::INFINITY, f64::min)
        .max(b.iter().map(|p| p.1).fold(f64::INFINITY, f64::min));
    let hi = a
        .iter()
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max)
        .min(b.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max));
    if span.is_nan() || span <= 0.0 || hi - lo < MIN_OVERLAP * span {
        return Err(Error::NonOverlapping);
    }
    let unit = |q: f64| (q - q_min) / span;
    let fit = |c: &[(f64, f64)]| {
        let t: Vec<f64> = c.iter().map(|p| unit(p.1)).collect();
        let y: Vec<f64> = c.iter().map(|p| p.0.log10()).collect();
        fit_cubic(&t, &y)
    };
    let (pa, pb) = (fit(&a)?, fit(&b)?);
    let (ta, tb) = (unit(lo), unit(hi));
    let diff = simpson(|t| eval(&pb, t) - eval(&pa, t), ta, tb) / (tb - ta);
    Ok((10f64.powf(diff) - 1.0) * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve() -> Vec<(f64, f64)> {
        vec![
            (0.1, 30.0),
            (0.2, 33.1),
            (0.45, 36.0),
            (0.9, 39.2),
            (1.6, 41.5),
        ]
    }

    #[test]
    fn identity_is_exactly_zero() {
        assert_eq!(bd_rate(&curve(), &curve()).unwrap(), 0.0);
    }

    #[test]
    fn doubled_rates_give_plus_100() {
        let doubled: Vec<_> = curve().iter().map(|&(r, q)| (2.0 * r, q)).collect();
        let r = bd_rate(&curve(), &doubled).unwrap();
        assert!((r - 100.0).abs() < 1e-9, "{r}");
        let back = bd_rate(&doubled, &curve()).unwrap();
        assert!((back + 50.0).abs() < 1e-9, "{back}");
    }

    #[test]
    fn errors() {
        let shifted: Vec<_> = curve().iter().map(|&(r, q)| (r, q + 20.0)).collect();
        assert!(matches!(
            bd_rate(&curve(), &shifted),
            Err(Error::NonOverlapping)
        ));
        let mut bumpy = curve();
        bumpy[2].1 = 40.0;
        assert!(matches!(bd_rate(&curve(), &bumpy), Err(Error::NonMonotone)));
        assert!(bd_rate(&curve()[..3], &curve()).is_err());
    }

    #[test]
    fn cubic_fit_interpolates_four_points() {
        let t = [0.0, 0.3, 0.7, 1.0];
        let y: Vec<f64> = t.iter().map(|v| 1.0 - 2.0 * v + 0.5 * v * v * v).collect();
        let p = fit_cubic(&t, &y).unwrap();
        for (ti, yi) in t.iter().zip(&y) {
            assert!((eval(&p, *ti) - yi).abs() < 1e-12);
        }
    }
}
