//! Classical multidimensional scaling and single-linkage clustering.
#![allow(clippy::needless_range_loop)]

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const JACOBI_TOLERANCE: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Eigenvalues above this count as non-negative.
pub const EIGEN_FLOOR: f64 = -1e-9;

/// Eigenvalues and column eigenvectors of a symmetric matrix by cyclic
/// Jacobi rotations. `vectors[i][k]` is component `i` of eigenvector `k`.
pub fn jacobi_eigen(m: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale = a
        .iter()
        .flatten()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(1.0);
    let off = |a: &[Vec<f64>]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += a[i][j] * a[i][j];
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off(&a) > JACOBI_TOLERANCE * scale {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::DegenerateEmbedding(format!(
                "jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    Ok(((0..n).map(|i| a[i][i]).collect(), v))
}

fn check_square(d: &[Vec<f64>]) -> Result<()> {
    let n = d.len();
    if d.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("dissimilarity matrix must be square"));
    }
    for i in 0..n {
        if d[i][i] != 0.0 {
            return Err(Error::invalid("dissimilarity diagonal must be zero"));
        }
        for j in 0..n {
            if !d[i][j].is_finite() || (d[i][j] - d[j][i]).abs() > 1e-12 {
                return Err(Error::invalid(
                    "dissimilarity matrix must be finite and symmetric",
                ));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdsEmbedding {
    pub coords: Vec<[f64; 2]>,
    /// Eigenvalues of the double-centered Gram matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Cluster label per point; empty until assigned.
    #[serde(default)]
    pub labels: Vec<usize>,
}

impl MdsEmbedding {
    pub fn distances(&self) -> Vec<Vec<f64>> {
        self.coords
            .iter()
            .map(|a| {
                self.coords
                    .iter()
                    .map(|b| (a[0] - b[0]).hypot(a[1] - b[1]))
                    .collect()
            })
            .collect()
    }
}

/// Classical MDS of `d` into the plane: `B = -1/2 J d^2 J`, coordinates
/// from the two largest eigenpairs. Each axis is flipped so that its
/// largest-magnitude coordinate is positive.
pub fn mds_embed(d: &[Vec<f64>]) -> Result<MdsEmbedding> {
    check_square(d)?;
    let n = d.len();
    let sq: Vec<Vec<f64>> = d
        .iter()
        .map(|r| r.iter().map(|x| x * x).collect())
        .collect();
    let row_mean: Vec<f64> = sq
        .iter()
        .map(|r| r.iter().sum::<f64>() / n as f64)
        .collect();
    let total = row_mean.iter().sum::<f64>() / n as f64;
    let b: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| -0.5 * (sq[i][j] - row_mean[i] - row_mean[j] + total))
                .collect()
        })
        .collect();
    let (values, vectors) = jacobi_eigen(&b)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    if eigenvalues.iter().filter(|&&l| l >= EIGEN_FLOOR).count() < 2 {
        return Err(Error::DegenerateEmbedding(format!(
            "fewer than 2 non-negative eigenvalues among {n}"
        )));
    }
    let mut coords = vec![[0.0; 2]; n];
    for axis in 0..2 {
        let k = order[axis];
        let s = eigenvalues[axis].max(0.0).sqrt();
        let col: Vec<f64> = (0..n).map(|i| s * vectors[i][k]).collect();
        let peak = (0..n).fold(0, |best, i| {
            if col[i].abs() > col[best].abs() {
                i
            } else {
                best
            }
        });
        let sign = if col[peak] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            coords[i][axis] = sign * col[i] + 0.0;
        }
    }
    Ok(MdsEmbedding {
        coords,
        eigenvalues,
        labels: Vec::new(),
    })
}

/// Single-linkage clusters of `d` cut at height `t`: points joined by a
/// chain of links with `d <= t` share a label. Labels number clusters in
/// order of first appearance.
pub fn cluster(d: &[Vec<f64>], t: f64) -> Result<Vec<usize>> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::invalid(format!(
            "link threshold {t} must be finite and > 0"
        )));
    }
    let n = d.len();
    if d.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("dissimilarity matrix must be square"));
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if d[i][j] <= t {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut labels = vec![usize::MAX; n];
    let mut next = 0;
    let mut by_root = std::collections::BTreeMap::new();
    for (i, label) in labels.iter_mut().enumerate() {
        let r = root(&mut parent, i);
        *label = *by_root.entry(r).or_insert_with(|| {
            next += 1;
            next - 1
        });
    }
    Ok(labels)
}

/// Root-sum-square distance between `a` and `b` after centering both and
/// applying the best rotation or reflection to `a`.
pub fn procrustes_residual(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid(
            "point sets must be non-empty and equally long",
        ));
    }
    let center = |p: &[[f64; 2]]| {
        let n = p.len() as f64;
        let (mx, my) = p.iter().fold((0.0, 0.0), |(x, y), q| (x + q[0], y + q[1]));
        p.iter()
            .map(|q| [q[0] - mx / n, q[1] - my / n])
            .collect::<Vec<_>>()
    };
    let (a, b) = (center(a), center(b));
    let best = |a: &[[f64; 2]]| {
        let (mut sxx, mut sxy, mut syx, mut syy) = (0.0, 0.0, 0.0, 0.0);
        for (p, q) in a.iter().zip(&b) {
            sxx += p[0] * q[0];
            sxy += p[0] * q[1];
            syx += p[1] * q[0];
            syy += p[1] * q[1];
        }
        let theta = (sxy - syx).atan2(sxx + syy);
        let (c, s) = (theta.cos(), theta.sin());
        a.iter()
            .zip(&b)
            .map(|(p, q)| {
                let r = [c * p[0] - s * p[1], s * p[0] + c * p[1]];
                (r[0] - q[0]).powi(2) + (r[1] - q[1]).powi(2)
            })
            .sum::<f64>()
    };
    let mirrored: Vec<[f64; 2]> = a.iter().map(|p| [-p[0], p[1]]).collect();
    Ok(best(&a).min(best(&mirrored)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonalizes() {
        let m = vec![
            vec![4.0, 1.0, 2.0],
            vec![1.0, 3.0, 0.5],
            vec![2.0, 0.5, 1.0],
        ];
        let (vals, vecs) = jacobi_eigen(&m).unwrap();
        for k in 0..3 {
            for i in 0..3 {
                let mv: f64 = (0..3).map(|j| m[i][j] * vecs[j][k]).sum();
                assert!((mv - vals[k] * vecs[i][k]).abs() < 1e-10);
            }
        }
        assert!((vals.iter().sum::<f64>() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_points_embed_exactly() {
        let d = vec![
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 1.0],
            vec![2.0, 1.0, 0.0],
        ];
        let e = mds_embed(&d).unwrap();
        for (r, row) in e.distances().iter().zip(&d) {
            for (x, y) in r.iter().zip(row) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_matrix_maps_to_origin() {
        let e = mds_embed(&vec![vec![0.0; 4]; 4]).unwrap();
        assert!(e.coords.iter().all(|c| c[0] == 0.0 && c[1] == 0.0));
    }

    #[test]
    fn single_point_is_degenerate() {
        assert!(matches!(
            mds_embed(&[vec![0.0]]),
            Err(Error::DegenerateEmbedding(_))
        ));
    }

    #[test]
    fn cluster_extremes() {
        let d = vec![
            vec![0.0, 0.3, 0.6],
            vec![0.3, 0.0, 0.4],
            vec![0.6, 0.4, 0.0],
        ];
        assert_eq!(cluster(&d, 1.0).unwrap(), vec![0, 0, 0]);
        assert_eq!(cluster(&d, 0.2).unwrap(), vec![0, 1, 2]);
        assert_eq!(cluster(&d, 0.35).unwrap(), vec![0, 0, 1]);
        assert!(cluster(&d, 0.0).is_err());
    }

    #[test]
    fn procrustes_ignores_rotation_and_reflection() {
        let a = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        let b: Vec<[f64; 2]> = a.iter().map(|p| [-p[1] + 5.0, -p[0] - 1.0]).collect();
        assert!(procrustes_residual(&a, &b).unwrap() < 1e-12);
    }
}
