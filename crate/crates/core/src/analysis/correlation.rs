//! Rank correlation between metrics and the derived dissimilarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rdo::RdCurve;

/// 1-based ranks; tied values share the average of their positions.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = avg;
        }
        start = end;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of tie-averaged ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::invalid("correlation needs at least 3 samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    pearson(&ranks(a), &ranks(b))
}

/// `d_ij = 1 - |rho_ij|`, with an exactly zero diagonal.
pub fn dissimilarity(rho: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rho.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { 1.0 - rho[i][j].abs() })
                .collect()
        })
        .collect()
}

/// Scores of several metrics on a common set of reconstructions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub metrics: Vec<String>,
    /// One row per reconstruction, one column per metric.
    pub rows: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn new(metrics: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if metrics.is_empty() {
            return Err(Error::invalid("score table needs at least one metric"));
        }
        for r in &rows {
            if r.len() != metrics.len() {
                return Err(Error::invalid(format!(
                    "row has {} scores for {} metrics",
                    r.len(),
                    metrics.len()
                )));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("scores must be finite"));
            }
        }
        Ok(ScoreTable { metrics, rows })
    }

    /// Every point of every curve becomes a row.
    pub fn from_curves(curves: &[RdCurve], metrics: &[String]) -> Result<Self> {
        let mut rows = Vec::new();
        for c in curves {
            for p in &c.points {
                let row = metrics
                    .iter()
                    .map(|m| {
                        p.scores
                            .get(m)
                            .copied()
                            .ok_or_else(|| Error::UnknownMetric(m.clone()))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                rows.push(row);
            }
        }
        ScoreTable::new(metrics.to_vec(), rows)
    }

    /// Reads a score CSV: a header `id,<metric>...` and one row per
    /// reconstruction. The id column is dropped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |e: csv::Error| Error::format("score csv", e.to_string());
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(bad)?.clone();
        if header.len() < 2 {
            return Err(Error::format(
                "score csv",
                "need an id column and at least one metric",
            ));
        }
        let metrics: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(bad)?;
            let row = record
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::format("score csv", format!("bad score `{v}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        ScoreTable::new(metrics, rows)
    }

    /// Inverse of [`ScoreTable::from_csv`] with ids `0..n`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("id,{}\n", self.metrics.join(","));
        for (i, r) in self.rows.iter().enumerate() {
            let cells: Vec<String> = r.iter().map(f64::to_string).collect();
            out.push_str(&format!("{i},{}\n", cells.join(",")));
        }
        out
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Symmetric Spearman matrix with a unit diagonal.
    pub fn spearman_matrix(&self) -> Result<Vec<Vec<f64>>> {
        let n = self.metrics.len();
        let cols: Vec<Vec<f64>> = (0..n).map(|j| self.column(j)).collect();
        let mut rho = vec![vec![1.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let r = spearman(&cols[i], &cols[j])?;
                rho[i][j] = r;
                rho[j][i] = r;
            }
        }
        if n == 1 {
            spearman(&cols[0], &cols[0])?;
        }
        Ok(rho)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_cases() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&a, &a).unwrap(), 1.0);
        assert_eq!(spearman(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        let r = spearman(&a, &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-15);
    }

    #[test]
    fn ties_share_average_ranks() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn degenerate_inputs() {
        let a = [1.0, 2.0, 3.0];
        assert!(matches!(
            spearman(&a, &[5.0; 3]),
            Err(Error::UndefinedCorrelation)
        ));
        assert!(spearman(&a[..2], &a[..2]).is_err());
        assert!(spearman(&a, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn dissimilarity_cases() {
        let rho = vec![
            vec![1.0, -1.0, 0.0],
            vec![-1.0, 1.0, 0.5],
            vec![0.0, 0.5, 1.0],
        ];
        let d = dissimilarity(&rho);
        assert_eq!(d[0][1], 0.0);
        assert_eq!(d[0][2], 1.0);
        assert_eq!(d[1][2], 0.5);
        assert_eq!(dissimilarity(&vec![vec![1.0; 3]; 3]), vec![vec![0.0; 3]; 3]);
    }
}
