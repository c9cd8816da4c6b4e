//! BD tables and report files: CSV, JSON summary and static SVG plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::rdo::RdCurve;

use super::bdrate::{bd_rate, SIMPSON_INTERVALS};
use super::mds::MdsEmbedding;

/// BD fit recorded in report metadata.
pub const BD_FIT: &str = "cubic";

/// BD-rate of `test` against `reference` on one score key ("psnr" for PSNR).
pub fn bd_rate_curves(reference: &RdCurve, test: &RdCurve, key: &str) -> Result<f64> {
    bd_rate(&reference.series(key)?, &test.series(key)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BdCell {
    Percent(f64),
    NonOverlap,
    NonMonotone,
}

impl BdCell {
    fn label(&self) -> String {
        match self {
            BdCell::Percent(v) => v.to_string(),
            BdCell::NonOverlap => "non-overlap".into(),
            BdCell::NonMonotone => "non-monotone".into(),
        }
    }
}

impl Serialize for BdCell {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BdCell::Percent(v) => s.serialize_f64(*v),
            other => s.serialize_str(&other.label()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BdTable {
    pub reference: String,
    pub metrics: Vec<String>,
    /// `(method, one cell per metric)`.
    pub rows: Vec<(String, Vec<BdCell>)>,
}

impl BdTable {
    pub fn get(&self, method: &str, metric: &str) -> Option<BdCell> {
        let j = self.metrics.iter().position(|m| m == metric)?;
        self.rows
            .iter()
            .find(|(m, _)| m == method)
            .map(|(_, r)| r[j])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,metric,bdrate_percent\n");
        for (method, cells) in &self.rows {
            for (metric, cell) in self.metrics.iter().zip(cells) {
                let _ = writeln!(out, "{method},{metric},{}", cell.label());
            }
        }
        out
    }

    /// `{method: {metric: percent | "non-overlap" | "non-monotone"}}`.
    pub fn summary(&self) -> BTreeMap<&str, BTreeMap<&str, BdCell>> {
        self.rows
            .iter()
            .map(|(method, cells)| {
                let row = self
                    .metrics
                    .iter()
                    .map(String::as_str)
                    .zip(cells.iter().copied())
                    .collect();
                (method.as_str(), row)
            })
            .collect()
    }
}

/// BD-rate of every test curve against `reference` for every metric key.
/// Invalid curve pairs become marked cells; other errors propagate.
pub fn bd_table(
    reference: (&str, &RdCurve),
    tests: &[(String, RdCurve)],
    metrics: &[String],
) -> Result<BdTable> {
    let mut rows = Vec::with_capacity(tests.len());
    for (method, curve) in tests {
        let cells = metrics
            .iter()
            .map(|m| match bd_rate_curves(reference.1, curve, m) {
                Ok(v) => Ok(BdCell::Percent(v)),
                Err(Error::NonOverlapping) => Ok(BdCell::NonOverlap),
                Err(Error::NonMonotone) => Ok(BdCell::NonMonotone),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((method.clone(), cells));
    }
    Ok(BdTable {
        reference: reference.0.to_owned(),
        metrics: metrics.to_vec(),
        rows,
    })
}

/// Inputs of one report directory.
#[derive(Default)]
pub struct Report<'a> {
    pub curves: &'a [(String, RdCurve)],
    pub bd: Option<&'a BdTable>,
    /// Metric names and their embedding.
    pub embedding: Option<(&'a [String], &'a MdsEmbedding)>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, x_label: &str, y_label: &str, xr: (f64, f64), yr: (f64, f64)) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(
        out,
        r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{x0}" y="{}" text-anchor="start">{:.4}</text>"#,
        y0 + 16.0,
        xr.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{x1}" y="{}" text-anchor="end">{:.4}</text>"#,
        y0 + 16.0,
        xr.1
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{y0}" text-anchor="end">{:.4}</text>"#,
        x0 - 4.0,
        yr.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="end">{:.4}</text>"#,
        x0 - 4.0,
        y1 + 10.0,
        yr.1
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn project(v: f64, r: (f64, f64), a: f64, b: f64) -> f64 {
    a + (v - r.0) / (r.1 - r.0) * (b - a)
}

/// Line plot with one polyline per series and a legend.
pub(crate) fn line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> String {
    let xr = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let yr = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let mut out = String::new();
    svg_open(&mut out, title);
    axes(&mut out, x_label, y_label, xr, yr);
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                format!(
                    "{:.2},{:.2}",
                    project(x, xr, LEFT, W - RIGHT),
                    project(y, yr, H - BOTTOM, TOP)
                )
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<rect x="{lx}" y="{}" width="14" height="4" fill="{color}"/>"#,
            ly - 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly}">{}</text>"#,
            lx + 20.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn scatter_plot(names: &[String], e: &MdsEmbedding) -> String {
    let xr = bounds(e.coords.iter().map(|c| c[0]));
    let yr = bounds(e.coords.iter().map(|c| c[1]));
    let mut out = String::new();
    svg_open(&mut out, "MDS of metric dissimilarity");
    axes(&mut out, "dimension 1", "dimension 2", xr, yr);
    for (i, (name, c)) in names.iter().zip(&e.coords).enumerate() {
        let label = e.labels.get(i).copied().unwrap_or(0);
        let color = PALETTE[label % PALETTE.len()];
        let (x, y) = (
            project(c[0], xr, LEFT, W - RIGHT),
            project(c[1], yr, H - BOTTOM, TOP),
        );
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 6.0,
            y - 6.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn file_key(key: &str) -> String {
    key.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn points_csv(curves: &[(String, RdCurve)]) -> String {
    let mut keys: Vec<String> = curves.iter().flat_map(|(_, c)| c.score_keys()).collect();
    keys.sort();
    keys.dedup();
    let mut out = String::from("method,qp,bpp,psnr_db,ms");
    for k in &keys {
        let _ = write!(out, ",{k}");
    }
    out.push('\n');
    for (method, c) in curves {
        for p in &c.points {
            let _ = write!(out, "{method},{},{},{},{}", p.qp, p.bpp, p.psnr_db, p.ms);
            for k in &keys {
                out.push(',');
                if let Some(v) = p.scores.get(k) {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
    }
    out
}

fn json<T: Serialize + ?Sized>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::invalid(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Writes the report files into `out_dir` (created if missing) and returns
/// their paths in write order.
pub fn emit_report(report: &Report, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        let path = out_dir.join(name);
        write_atomic(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    let curves = report.curves;
    if !curves.is_empty() {
        put("rd_points.csv", points_csv(curves).as_bytes())?;
        let mut keys = vec!["psnr".to_owned()];
        let mut scores: Vec<String> = curves.iter().flat_map(|(_, c)| c.score_keys()).collect();
        scores.sort();
        scores.dedup();
        keys.extend(scores);
        for key in keys {
            let series = curves
                .iter()
                .filter_map(|(m, c)| c.series(&key).ok().map(|s| (m.clone(), s)))
                .collect::<Vec<_>>();
            let y_label = if key == "psnr" {
                "PSNR (dB)".to_owned()
            } else {
                key.clone()
            };
            let svg = line_plot(&format!("rate vs {y_label}"), "bpp", &y_label, &series);
            put(&format!("rd_{}.svg", file_key(&key)), svg.as_bytes())?;
        }
    }
    if let Some(bd) = report.bd {
        put("bdrate.csv", bd.to_csv().as_bytes())?;
        put("summary.json", &json(&bd.summary())?)?;
    }
    if let Some((names, e)) = report.embedding {
        if names.len() != e.coords.len() {
            return Err(Error::invalid(
                "embedding and metric names differ in length",
            ));
        }
        let mut csv = String::from("metric,x,y,cluster\n");
        for (i, (n, c)) in names.iter().zip(&e.coords).enumerate() {
            let label = e.labels.get(i).map_or(String::new(), |l| l.to_string());
            let _ = writeln!(csv, "{n},{},{},{label}", c[0], c[1]);
        }
        put("mds.csv", csv.as_bytes())?;
        put("mds.svg", scatter_plot(names, e).as_bytes())?;
    }
    let meta = serde_json::json!({
        "bd_fit": BD_FIT,
        "bd_integration": format!("simpson-{SIMPSON_INTERVALS}"),
        "bd_reference": report.bd.map(|b| b.reference.clone()),
        "dissimilarity": "1 - |spearman|",
    });
    put("metadata.json", &json(&meta)?)?;
    Ok(written)
}
