//! Block-level rate-distortion optimization over partition and delta QP,
//! with SSE or SSE plus a linearized metric ensemble as distortion.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::blockcodec::{
    assemble, centered_dct, code_coefficients, coding_domain, delta_of_qp, finish_reconstruction,
    pixel_step, side_bits, Bitstream, Header, MacroblockDecision, Partition, QpParams, PIXEL_SCALE,
};
use crate::error::{Error, Result};
use crate::image::{gradient_to_ycbcr, psnr, GradientField, Image, MACROBLOCK};
use crate::io::write_atomic;
use crate::metrics::{member_grad, MetricEnsembleSpec, SharedMetric, Weight};
use crate::smoothing::{smooth_score, SmoothingConfig};

/// Quantization parameters of the evaluation protocol.
pub const PROTOCOL_QPS: [i32; 5] = [25, 28, 31, 34, 37];

/// `0.85 * delta(qp)^2`, on the 8-bit sample scale.
pub fn lambda_of_qp(qp: i32) -> Result<f64> {
    let d = delta_of_qp(qp)?;
    Ok(0.85 * d * d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RdoMode {
    Sse,
    Lnrm,
}

/// Lagrange multiplier on the 8-bit sample scale, or derived from the base QP.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Lambda {
    Auto,
    Value(f64),
}

impl Lambda {
    pub fn resolve(self, base_qp: i32) -> Result<f64> {
        match self {
            Lambda::Auto => lambda_of_qp(base_qp),
            Lambda::Value(v) if v.is_finite() && v >= 0.0 => Ok(v),
            Lambda::Value(v) => Err(Error::invalid(format!(
                "lambda {v} must be finite and >= 0"
            ))),
        }
    }
}

impl Serialize for Lambda {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Lambda::Auto => s.serialize_str("auto"),
            Lambda::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Lambda {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match Weight::deserialize(d)? {
            Weight::Auto => Ok(Lambda::Auto),
            Weight::Value(v) => Ok(Lambda::Value(v)),
        }
    }
}

fn default_delta_qp() -> [i32; 2] {
    [-4, 4]
}

fn default_partitions() -> Vec<usize> {
    vec![4, 16]
}

fn default_chroma_offset() -> i32 {
    crate::blockcodec::DEFAULT_CHROMA_QP_OFFSET
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RdoConfig {
    pub mode: RdoMode,
    #[serde(default)]
    pub ensemble: Option<MetricEnsembleSpec>,
    pub base_qp: i32,
    #[serde(default = "lambda_auto")]
    pub lambda: Lambda,
    /// Inclusive delta QP range searched per macroblock.
    #[serde(default = "default_delta_qp")]
    pub delta_qp: [i32; 2],
    /// Block sizes the search may use: 4 (split) and/or 16 (whole).
    #[serde(default = "default_partitions")]
    pub partitions: Vec<usize>,
    #[serde(default = "default_chroma_offset")]
    pub chroma_offset: i32,
}

fn lambda_auto() -> Lambda {
    Lambda::Auto
}

impl RdoConfig {
    pub fn sse(base_qp: i32) -> Self {
        RdoConfig {
            mode: RdoMode::Sse,
            ensemble: None,
            base_qp,
            lambda: Lambda::Auto,
            delta_qp: default_delta_qp(),
            partitions: default_partitions(),
            chroma_offset: default_chroma_offset(),
        }
    }

    pub fn lnrm(base_qp: i32, ensemble: MetricEnsembleSpec) -> Self {
        RdoConfig {
            mode: RdoMode::Lnrm,
            ensemble: Some(ensemble),
            ..Self::sse(base_qp)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.qp_params()?;
        let [lo, hi] = self.delta_qp;
        if lo > hi {
            return Err(Error::invalid(format!("empty delta qp range [{lo}, {hi}]")));
        }
        self.search_partitions()?;
        self.lambda.resolve(self.base_qp)?;
        if self.mode == RdoMode::Lnrm {
            self.ensemble
                .as_ref()
                .ok_or_else(|| Error::invalid("lnrm mode needs an ensemble"))?
                .validate()?;
        }
        Ok(())
    }

    pub fn search_partitions(&self) -> Result<Vec<Partition>> {
        if self.partitions.is_empty() {
            return Err(Error::invalid("no partitions to search"));
        }
        let mut out = Vec::new();
        for &size in &self.partitions {
            let p = match size {
                16 => Partition::Whole16,
                4 => Partition::Split4,
                _ => return Err(Error::invalid(format!("unsupported partition size {size}"))),
            };
            if !out.contains(&p) {
                out.push(p);
            }
        }
        Ok(out)
    }

    fn qp_params(&self) -> Result<QpParams> {
        // The bitstream header has no field for it, so the decoder always
        // assumes the default.
        if self.chroma_offset != crate::blockcodec::DEFAULT_CHROMA_QP_OFFSET {
            return Err(Error::invalid(format!(
                "chroma offset {} is not decodable; only {} is supported",
                self.chroma_offset,
                crate::blockcodec::DEFAULT_CHROMA_QP_OFFSET
            )));
        }
        QpParams::new(self.base_qp)
    }
}

/// `tau_bar_i = sqrt(n_p / 12) * step / ||g_i||`.
pub fn calibrate_tau_hybrid(grads: &[&GradientField], step: f64, n_p: usize) -> Result<Vec<f64>> {
    grads
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let norm = g.norm();
            if norm == 0.0 {
                return Err(Error::DegenerateMetric(format!(
                    "ensemble member {i} has a zero gradient"
                )));
            }
            Ok((n_p as f64 / 12.0).sqrt() * step / norm)
        })
        .collect()
}

/// Member gradients at one image, ready to be weighted for any step size.
#[derive(Clone, Debug)]
pub struct EnsembleGradients {
    pub alpha: f64,
    pub names: Vec<String>,
    pub fields: Vec<GradientField>,
    pub weights: Vec<Weight>,
}

impl EnsembleGradients {
    /// Evaluates every member (smoothed when the spec says so) once.
    pub fn compute(spec: &MetricEnsembleSpec, members: &[SharedMetric], x: &Image) -> Result<Self> {
        spec.validate()?;
        if members.len() != spec.entries.len() {
            return Err(Error::invalid(
                "member count does not match ensemble entries",
            ));
        }
        let fields = members
            .iter()
            .map(|m| member_grad(m.as_ref(), x, spec.smoothing.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(EnsembleGradients {
            alpha: spec.alpha,
            names: members.iter().map(|m| m.name().to_owned()).collect(),
            fields,
            weights: spec.entries.iter().map(|e| e.weight).collect(),
        })
    }

    /// Effective weights `alpha * tau_bar_i`, where explicit weights replace
    /// the calibrated `tau_bar_i`.
    pub fn taus(&self, step: f64) -> Result<Vec<f64>> {
        let n_p = self.fields.first().map_or(0, |g| g.data().len());
        let mut out = Vec::with_capacity(self.fields.len());
        for (g, w) in self.fields.iter().zip(&self.weights) {
            let tau_bar = match w {
                Weight::Value(v) => *v,
                Weight::Auto => calibrate_tau_hybrid(&[g], step, n_p)?[0],
            };
            out.push(self.alpha * tau_bar);
        }
        Ok(out)
    }

    /// `G = sum_i tau_i * g_i` in member order.
    pub fn combined(&self, step: f64) -> Result<GradientField> {
        let geometry = self
            .fields
            .first()
            .ok_or_else(|| Error::invalid("empty ensemble"))?
            .geometry();
        let mut acc = GradientField::zeros(geometry);
        if self.alpha == 0.0 {
            return Ok(acc);
        }
        for (g, tau) in self.fields.iter().zip(self.taus(step)?) {
            acc.add_scaled(g, tau)?;
        }
        Ok(acc)
    }
}

/// Combined ensemble gradient at `x` for pixel-domain quantization `step`.
pub fn combined_gradient(
    spec: &MetricEnsembleSpec,
    members: &[SharedMetric],
    x: &Image,
    step: f64,
) -> Result<GradientField> {
    EnsembleGradients::compute(spec, members, x)?.combined(step)
}

/// `||x - x_hat||^2 + <g, x_hat - x> + lambda * bits` over one block.
pub fn block_cost(x: &[f64], x_hat: &[f64], bits: u64, g: Option<&[f64]>, lambda: f64) -> f64 {
    let (sse, lin) = block_distortion(x, x_hat, g);
    sse + lin + lambda * bits as f64
}

fn block_distortion(x: &[f64], x_hat: &[f64], g: Option<&[f64]>) -> (f64, f64) {
    let mut sse = 0.0;
    let mut lin = 0.0;
    match g {
        Some(g) => {
            for ((a, b), gv) in x.iter().zip(x_hat).zip(g) {
                let d = b - a;
                sse += d * d;
                lin += gv * d;
            }
        }
        None => {
            for (a, b) in x.iter().zip(x_hat) {
                let d = b - a;
                sse += d * d;
            }
        }
    }
    (sse, lin)
}

/// Coding-domain inputs of one macroblock search.
struct Search<'a> {
    x: &'a Image,
    g: Option<&'a GradientField>,
    qp: QpParams,
    /// Lagrangian on the [0, 1] sample scale.
    lambda: f64,
    dqps: Vec<i32>,
    partitions: Vec<Partition>,
}

struct BlockInput {
    samples: Vec<f64>,
    grad: Option<Vec<f64>>,
    coeffs: Vec<f64>,
}

/// Selected candidate of one macroblock.
#[derive(Clone, Debug)]
pub struct MacroblockChoice {
    pub decision: MacroblockDecision,
    /// Clamped block reconstructions, same order as the decision levels.
    pub reconstruction: Vec<Vec<f64>>,
    pub bits: u64,
    pub sse: f64,
    pub lnrm: f64,
    pub cost: f64,
}

impl MacroblockChoice {
    fn key(&self) -> (f64, u64, i32, bool, bool) {
        let d = self.decision.delta_qp;
        (
            self.cost,
            self.bits,
            d.abs(),
            d > 0,
            self.decision.partition == Partition::Split4,
        )
    }

    fn beats(&self, other: &MacroblockChoice) -> bool {
        self.key().partial_cmp(&other.key()) == Some(std::cmp::Ordering::Less)
    }
}

impl Search<'_> {
    fn inputs(&self, row: usize, col: usize, partition: Partition) -> Result<Vec<BlockInput>> {
        let size = partition.block_size();
        let mut out = Vec::new();
        for plane in 0..self.x.channels() {
            for (dr, dc) in partition.block_offsets() {
                let samples = self.x.block(plane, row + dr, col + dc, size)?.samples();
                let grad = self.g.map(|g| {
                    let mut v = Vec::with_capacity(size * size);
                    for r in 0..size {
                        for c in 0..size {
                            v.push(g.at(plane, row + dr + r, col + dc + c));
                        }
                    }
                    v
                });
                let coeffs = centered_dct(&samples)?;
                out.push(BlockInput {
                    samples,
                    grad,
                    coeffs,
                });
            }
        }
        Ok(out)
    }

    fn macroblock(&self, row: usize, col: usize) -> Result<MacroblockChoice> {
        let mut best: Option<MacroblockChoice> = None;
        for &partition in &self.partitions {
            let inputs = self.inputs(row, col, partition)?;
            let per_plane = partition.blocks_per_plane();
            for &dqp in &self.dqps {
                let mut bits = side_bits(dqp);
                let (mut sse, mut lnrm) = (0.0, 0.0);
                let mut levels = Vec::with_capacity(inputs.len());
                let mut recon = Vec::with_capacity(inputs.len());
                for (i, b) in inputs.iter().enumerate() {
                    let step = pixel_step(self.qp.effective(dqp, i / per_plane))?;
                    let coded = code_coefficients(&b.coeffs, step)?;
                    let (s, l) =
                        block_distortion(&b.samples, &coded.reconstruction, b.grad.as_deref());
                    sse += s;
                    lnrm += l;
                    bits += coded.bits;
                    levels.push(coded.levels);
                    recon.push(coded.reconstruction);
                }
                let cand = MacroblockChoice {
                    decision: MacroblockDecision {
                        partition,
                        delta_qp: dqp,
                        levels,
                    },
                    reconstruction: recon,
                    bits,
                    sse,
                    lnrm,
                    cost: sse + lnrm + self.lambda * bits as f64,
                };
                if best.as_ref().is_none_or(|b| cand.beats(b)) {
                    best = Some(cand);
                }
            }
        }
        best.ok_or_else(|| Error::invalid("empty candidate set"))
    }
}

/// Output of one RDO encode.
#[derive(Clone, Debug)]
pub struct RdoOutcome {
    pub bitstream: Bitstream,
    /// Decoded-equivalent output image (original geometry).
    pub reconstruction: Image,
    /// Padded coding-domain reconstruction.
    pub coded_reconstruction: Image,
    pub decisions: Vec<MacroblockDecision>,
    /// Lagrangian used, on the 8-bit sample scale.
    pub lambda: f64,
    /// Coding-domain SSE accumulated during the search.
    pub sse: f64,
    /// Linearized metric term accumulated during the search.
    pub lnrm: f64,
}

impl RdoOutcome {
    pub fn bits(&self) -> u64 {
        self.bitstream.total_bits()
    }

    pub fn bpp(&self) -> f64 {
        let g = self.reconstruction.geometry();
        self.bits() as f64 / (g.width * g.height) as f64
    }
}

/// Maps an image-domain gradient to the padded coding domain.
pub fn coding_gradient(g: &GradientField) -> GradientField {
    let g = if g.geometry().channels == 3 {
        gradient_to_ycbcr(g)
    } else {
        g.clone()
    };
    g.pad_to_multiple(MACROBLOCK)
}

/// RDO encode with an explicit image-domain linear term `field` (none means
/// plain SSE). `cfg.mode` and `cfg.ensemble` are ignored here.
pub fn rdo_encode_with_field(
    x: &Image,
    cfg: &RdoConfig,
    field: Option<&GradientField>,
) -> Result<RdoOutcome> {
    QpParams::new(cfg.base_qp)?;
    let lambda = cfg.lambda.resolve(cfg.base_qp)?;
    if let Some(f) = field {
        f.geometry().ensure_same(&x.geometry())?;
    }
    let header = Header::for_image(x.geometry(), cfg.base_qp)?;
    let coded = coding_domain(x);
    let g = field.map(coding_gradient);
    let [lo, hi] = cfg.delta_qp;
    if lo > hi {
        return Err(Error::invalid(format!("empty delta qp range [{lo}, {hi}]")));
    }
    let search = Search {
        x: &coded,
        g: g.as_ref(),
        qp: cfg.qp_params()?,
        lambda: lambda / (PIXEL_SCALE * PIXEL_SCALE),
        dqps: (lo..=hi).collect(),
        partitions: cfg.search_partitions()?,
    };
    let padded = coded.geometry();
    let per_row = padded.width / MACROBLOCK;
    let count = per_row * (padded.height / MACROBLOCK);
    let choices = (0..count)
        .into_par_iter()
        .map(|mb| search.macroblock((mb / per_row) * MACROBLOCK, (mb % per_row) * MACROBLOCK))
        .collect::<Result<Vec<_>>>()?;

    let mut recon = Image::filled(padded, 0.0);
    let (mut sse, mut lnrm) = (0.0, 0.0);
    let mut decisions = Vec::with_capacity(count);
    for (mb, c) in choices.into_iter().enumerate() {
        let (row, col) = ((mb / per_row) * MACROBLOCK, (mb % per_row) * MACROBLOCK);
        let p = c.decision.partition;
        let per_plane = p.blocks_per_plane();
        for (i, samples) in c.reconstruction.iter().enumerate() {
            let (dr, dc) = p.block_offsets().nth(i % per_plane).unwrap();
            recon.put_block(i / per_plane, row + dr, col + dc, p.block_size(), samples);
        }
        sse += c.sse;
        lnrm += c.lnrm;
        decisions.push(c.decision);
    }
    let bitstream = assemble(header, &decisions)?;
    let reconstruction = finish_reconstruction(&recon, x.geometry())?;
    Ok(RdoOutcome {
        bitstream,
        reconstruction,
        coded_reconstruction: recon,
        decisions,
        lambda,
        sse,
        lnrm,
    })
}

/// RDO encode per `cfg`, resolving the ensemble gradient at `x` when in
/// lnrm mode. `members` must follow the ensemble entry order.
pub fn rdo_encode(x: &Image, cfg: &RdoConfig, members: &[SharedMetric]) -> Result<RdoOutcome> {
    cfg.validate()?;
    match (cfg.mode, &cfg.ensemble) {
        (RdoMode::Lnrm, Some(spec)) => {
            let grads = EnsembleGradients::compute(spec, members, x)?;
            let field = grads.combined(pixel_step(cfg.base_qp)?)?;
            rdo_encode_with_field(x, cfg, Some(&field))
        }
        _ => rdo_encode_with_field(x, cfg, None),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub qp: i32,
    pub bpp: f64,
    pub psnr_db: f64,
    /// Metric scores of the reconstruction (loss convention). Smoothed
    /// scores are keyed `<metric>@smoothed`.
    pub scores: BTreeMap<String, f64>,
    pub ms: f64,
}

/// Points of one RD sweep, ordered by QP.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RdCurve {
    pub points: Vec<RdPoint>,
}

pub const SMOOTHED_SUFFIX: &str = "@smoothed";

impl RdCurve {
    /// `(bpp, score)` pairs for a score key; "psnr" selects PSNR.
    pub fn series(&self, key: &str) -> Result<Vec<(f64, f64)>> {
        self.points
            .iter()
            .map(|p| {
                let q = if key == "psnr" {
                    Some(p.psnr_db)
                } else {
                    p.scores.get(key).copied()
                };
                q.map(|q| (p.bpp, q))
                    .ok_or_else(|| Error::UnknownMetric(key.to_owned()))
            })
            .collect()
    }

    pub fn score_keys(&self) -> Vec<String> {
        let mut keys: Vec<String> = self
            .points
            .iter()
            .flat_map(|p| p.scores.keys().cloned())
            .collect();
        keys.sort();
        keys.dedup();
        keys
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format("rd curve", e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::format("rd curve", e.to_string()))
    }

    pub fn to_csv(&self) -> String {
        let keys = self.score_keys();
        let mut out = String::from("qp,bpp,psnr_db,ms");
        for k in &keys {
            out.push(',');
            out.push_str(k);
        }
        out.push('\n');
        for p in &self.points {
            let _ = write!(out, "{},{},{},{}", p.qp, p.bpp, p.psnr_db, p.ms);
            for k in &keys {
                match p.scores.get(k) {
                    Some(v) => {
                        let _ = write!(out, ",{v}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, json_path: &Path) -> Result<()> {
        write_atomic(json_path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Metrics scored on every sweep reconstruction.
#[derive(Clone, Default)]
pub struct EvalSet {
    pub metrics: Vec<SharedMetric>,
    /// Also records smoothed scores when set.
    pub smoothing: Option<SmoothingConfig>,
}

fn evaluate_point(
    qp: i32,
    x: &Image,
    outcome: &RdoOutcome,
    eval: &EvalSet,
    ms: f64,
) -> Result<RdPoint> {
    let mut scores = BTreeMap::new();
    for m in &eval.metrics {
        scores.insert(m.name().to_owned(), m.score(&outcome.reconstruction)?);
        if let Some(cfg) = &eval.smoothing {
            let key = format!("{}{SMOOTHED_SUFFIX}", m.name());
            scores.insert(key, smooth_score(m.as_ref(), &outcome.reconstruction, cfg)?);
        }
    }
    Ok(RdPoint {
        qp,
        bpp: outcome.bpp(),
        psnr_db: psnr(x, &outcome.reconstruction)?,
        scores,
        ms,
    })
}

/// Encodes `x` at every QP of `qps` (strictly increasing) with `template`
/// (its base QP is replaced), recalibrating weights per point.
pub fn sweep(
    x: &Image,
    qps: &[i32],
    template: &RdoConfig,
    members: &[SharedMetric],
    eval: &EvalSet,
) -> Result<RdCurve> {
    if qps.is_empty() {
        return Err(Error::invalid("empty qp list"));
    }
    if qps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("qp list must be strictly increasing"));
    }
    let mut base = template.clone();
    base.base_qp = qps[0];
    base.validate()?;
    // Member gradients do not depend on QP; only the calibration does.
    let grads = match (base.mode, &base.ensemble) {
        (RdoMode::Lnrm, Some(spec)) => Some(EnsembleGradients::compute(spec, members, x)?),
        _ => None,
    };
    let points = qps
        .par_iter()
        .map(|&qp| {
            let start = Instant::now();
            let mut cfg = base.clone();
            cfg.base_qp = qp;
            let field = match &grads {
                Some(g) => Some(g.combined(pixel_step(qp)?)?),
                None => None,
            };
            let outcome = rdo_encode_with_field(x, &cfg, field.as_ref())?;
            let ms = start.elapsed().as_secs_f64() * 1e3;
            log::debug!("qp {qp}: {} bits in {ms:.1} ms", outcome.bits());
            evaluate_point(qp, x, &outcome, eval, ms)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RdCurve { points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_closed_forms() {
        assert!((lambda_of_qp(4).unwrap() - 0.85).abs() < 1e-15);
        assert!((lambda_of_qp(10).unwrap() - 3.4).abs() < 1e-15);
        let r = lambda_of_qp(16).unwrap() / lambda_of_qp(10).unwrap();
        assert!((r - 4.0).abs() < 1e-12);
    }

    #[test]
    fn calibration_closed_forms() {
        let g1 = GradientField::new(crate::Geometry::new(1, 1, 1).unwrap(), vec![1.0]).unwrap();
        assert_eq!(calibrate_tau_hybrid(&[&g1], 1.0, 12).unwrap(), vec![1.0]);
        let g4 = GradientField::new(crate::Geometry::new(1, 1, 1).unwrap(), vec![4.0]).unwrap();
        assert_eq!(calibrate_tau_hybrid(&[&g4], 2.0, 48).unwrap(), vec![1.0]);
        let zero = GradientField::zeros(crate::Geometry::new(2, 2, 1).unwrap());
        assert!(matches!(
            calibrate_tau_hybrid(&[&zero], 1.0, 4),
            Err(Error::DegenerateMetric(_))
        ));
    }

    #[test]
    fn block_cost_cases() {
        let x = [0.1, 0.2, 0.3];
        assert_eq!(block_cost(&x, &x, 7, Some(&[1.0, 2.0, 3.0]), 0.5), 3.5);
        let y = [0.2, 0.2, 0.1];
        let plain = block_cost(&x, &y, 3, None, 2.0);
        let zero_g = block_cost(&x, &y, 3, Some(&[0.0; 3]), 2.0);
        assert_eq!(plain, zero_g);
    }

    #[test]
    fn config_json_defaults() {
        let cfg: RdoConfig = serde_json::from_str(r#"{"mode":"sse","base_qp":28}"#).unwrap();
        assert_eq!(cfg, RdoConfig::sse(28));
        let cfg: RdoConfig =
            serde_json::from_str(r#"{"mode":"sse","base_qp":28,"lambda":12.5}"#).unwrap();
        assert_eq!(cfg.lambda, Lambda::Value(12.5));
        assert!(serde_json::from_str::<RdoConfig>(r#"{"mode":"sse","base_qp":28,"x":1}"#).is_err());
        let mut bad = RdoConfig::sse(28);
        bad.partitions = vec![8];
        assert!(bad.validate().is_err());
        let lnrm_without = RdoConfig {
            mode: RdoMode::Lnrm,
            ..RdoConfig::sse(28)
        };
        assert!(lnrm_without.validate().is_err());
        let offset = RdoConfig {
            chroma_offset: 5,
            ..RdoConfig::sse(28)
        };
        assert!(offset.validate().is_err());
        let x = Image::filled(crate::Geometry::new(16, 16, 3).unwrap(), 0.5);
        assert!(rdo_encode_with_field(&x, &offset, None).is_err());
    }
}
