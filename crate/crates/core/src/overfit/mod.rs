//! Toy overfitted codec: a latent pyramid, linear synthesis and a Laplace
//! rate proxy, fit to one image by Adam under one of five objectives.
//!
//! Trainable latents live in pixel units; the coded integers are
//! `latent / latent_step`. Training adds uniform noise of one quantization
//! step, evaluation rounds.

mod adam;
mod rate;
mod synthesis;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{psnr, sse, GradientField, Image};
use crate::metrics::{
    ensemble_grad, CountingMetric, Metric, MetricEnsembleSpec, SharedMetric, Weight,
};
use crate::rng::Stream;
use crate::smoothing::{smooth_evaluate, SmoothingConfig};

pub use adam::{Adam, AdamConfig};
pub use rate::{laplace_bits, LaplaceCode};
pub use synthesis::{grid_len, Synthesis};

pub const DEFAULT_SCALES: usize = 4;
pub const DEFAULT_ITERATIONS: usize = 2000;
pub const DEFAULT_WARMUP: usize = 200;
pub const DEFAULT_LATENT_STEP: f64 = 1.0 / 32.0;
/// Lambda grid of the overfitted sweep.
pub const PROTOCOL_LAMBDAS: [f64; 4] = [0.004, 0.001, 0.0004, 0.0001];

/// Smallest warm-up score magnitude accepted by the calibration.
pub const MIN_WARMUP_SCORE: f64 = 1e-12;

const RATE_STREAM: u64 = 0x7261_7465_0000_0000;
const SMOOTH_STREAM: u64 = 0x736d_6f6f_0000_0000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Sse,
    Nrm,
    SNrm,
    Lnrm,
    Slnrm,
}

impl Objective {
    pub const ALL: [Objective; 5] = [
        Objective::Sse,
        Objective::Nrm,
        Objective::SNrm,
        Objective::Lnrm,
        Objective::Slnrm,
    ];

    pub fn smoothed(self) -> bool {
        matches!(self, Objective::SNrm | Objective::Slnrm)
    }

    pub fn uses_metrics(self) -> bool {
        self != Objective::Sse
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Sse => "sse",
            Objective::Nrm => "nrm",
            Objective::SNrm => "s-nrm",
            Objective::Lnrm => "lnrm",
            Objective::Slnrm => "slnrm",
        })
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.to_string() == s)
            .ok_or_else(|| Error::invalid(format!("unknown objective `{s}`")))
    }
}

fn default_iterations() -> usize {
    DEFAULT_ITERATIONS
}

fn default_warmup() -> usize {
    DEFAULT_WARMUP
}

fn default_scales() -> usize {
    DEFAULT_SCALES
}

fn default_latent_step() -> f64 {
    DEFAULT_LATENT_STEP
}

fn default_objective() -> Objective {
    Objective::Sse
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverfitConfig {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    pub lambda: f64,
    #[serde(default = "default_objective")]
    pub objective: Objective,
    #[serde(default)]
    pub ensemble: Option<MetricEnsembleSpec>,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_scales")]
    pub scales: usize,
    /// Pixel value of one latent integer.
    #[serde(default = "default_latent_step")]
    pub latent_step: f64,
}

impl OverfitConfig {
    pub fn sse(lambda: f64) -> Self {
        OverfitConfig {
            iterations: DEFAULT_ITERATIONS,
            warmup: DEFAULT_WARMUP,
            lambda,
            objective: Objective::Sse,
            ensemble: None,
            optimizer: AdamConfig::default(),
            seed: 0,
            scales: DEFAULT_SCALES,
            latent_step: DEFAULT_LATENT_STEP,
        }
    }

    pub fn with_objective(lambda: f64, objective: Objective, ensemble: MetricEnsembleSpec) -> Self {
        OverfitConfig {
            objective,
            ensemble: Some(ensemble),
            ..Self::sse(lambda)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup >= self.iterations {
            return Err(Error::invalid(format!(
                "warmup {} must be below iterations {}",
                self.warmup, self.iterations
            )));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid(format!(
                "lambda {} must be finite and > 0",
                self.lambda
            )));
        }
        if self.scales == 0 {
            return Err(Error::invalid("at least one latent scale is needed"));
        }
        if !(self.latent_step.is_finite() && self.latent_step > 0.0) {
            return Err(Error::invalid("latent_step must be finite and > 0"));
        }
        let o = &self.optimizer;
        let ok = o.lr > 0.0
            && o.lr_final > 0.0
            && (0.0..1.0).contains(&o.beta1)
            && (0.0..1.0).contains(&o.beta2)
            && o.eps > 0.0;
        if !ok {
            return Err(Error::invalid("optimizer hyperparameters out of range"));
        }
        match (&self.ensemble, self.objective.uses_metrics()) {
            (Some(spec), _) => spec.validate(),
            (None, true) => Err(Error::invalid(format!(
                "objective {} needs a metric ensemble",
                self.objective
            ))),
            (None, false) => Ok(()),
        }
    }

    /// Smoothing used by the smoothed objectives.
    pub fn smoothing(&self) -> Option<SmoothingConfig> {
        if !self.objective.smoothed() {
            return None;
        }
        let base = self.ensemble.as_ref().and_then(|e| e.smoothing);
        Some(base.unwrap_or_default())
    }
}

/// Latent grids (pixel units, one per scale, channel-planar) and per-scale
/// log Laplace scales.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPyramid {
    pub grids: Vec<Vec<f64>>,
    pub log_b: Vec<f64>,
}

impl LatentPyramid {
    /// All latents zero, every `b_s = 1`.
    pub fn zeros(synthesis: &Synthesis) -> Self {
        LatentPyramid {
            grids: synthesis
                .grid_sizes()
                .into_iter()
                .map(|n| vec![0.0; n])
                .collect(),
            log_b: vec![0.0; synthesis.scales()],
        }
    }

    pub fn len(&self) -> usize {
        self.grids.iter().map(Vec::len).sum::<usize>() + self.log_b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Latents rounded to the coding lattice.
    pub fn rounded(&self, latent_step: f64) -> LatentPyramid {
        LatentPyramid {
            grids: self
                .grids
                .iter()
                .map(|g| {
                    g.iter()
                        .map(|v| (v / latent_step).round() * latent_step)
                        .collect()
                })
                .collect(),
            log_b: self.log_b.clone(),
        }
    }

    /// Codelength in bits of the latents, which must lie on the lattice.
    pub fn codelength(&self, latent_step: f64) -> f64 {
        let mut bits = 0.0;
        for (g, &lb) in self.grids.iter().zip(&self.log_b) {
            let code = LaplaceCode::new(lb.exp());
            for &v in g {
                bits += code.bits(v / latent_step).0;
            }
        }
        bits
    }
}

/// Rate of the latents perturbed with uniform noise keyed on
/// `(seed, iteration)`, the perturbed latents, and derivatives of the bits
/// wrt each latent (in coded units) and each `ln b_s`.
pub fn rate_proxy(
    latents: &LatentPyramid,
    latent_step: f64,
    seed: u64,
    iteration: u64,
) -> (f64, LatentPyramid, LatentPyramid) {
    let mut noise = Stream::new(seed, RATE_STREAM ^ iteration);
    let mut bits = 0.0;
    let mut noisy = latents.clone();
    let mut grad = LatentPyramid {
        grids: Vec::with_capacity(latents.grids.len()),
        log_b: Vec::with_capacity(latents.log_b.len()),
    };
    for (s, &lb) in latents.log_b.iter().enumerate() {
        let code = LaplaceCode::new(lb.exp());
        let mut d_grid = Vec::with_capacity(latents.grids[s].len());
        let mut d_logb = 0.0;
        for v in noisy.grids[s].iter_mut() {
            let l = *v / latent_step + (noise.uniform() - 0.5);
            *v = l * latent_step;
            let (r, d_l, d_b) = code.bits(l);
            bits += r;
            d_grid.push(d_l);
            d_logb += d_b;
        }
        grad.grids.push(d_grid);
        grad.log_b.push(d_logb);
    }
    (bits, noisy, grad)
}

/// What the distortion adds to the squared error.
pub enum Regularizer<'a> {
    None,
    /// `sum_i tau_i b_i(x_hat)`, smoothed when configured.
    Direct {
        members: Vec<(&'a dyn Metric, f64)>,
        smoothing: Option<SmoothingConfig>,
    },
    /// `<G, x_hat - x>` with a fixed `G`.
    Linear(GradientField),
}

pub struct ObjectiveValue {
    pub loss: f64,
    pub distortion: f64,
    pub rate_bits: f64,
    pub grad: LatentPyramid,
}

/// Training loss `D + lambda * rate` of one iteration.
pub struct TrainingObjective<'a> {
    pub x: &'a Image,
    pub synthesis: &'a Synthesis,
    pub regularizer: Regularizer<'a>,
    pub lambda: f64,
    pub latent_step: f64,
    pub seed: u64,
}

impl TrainingObjective<'_> {
    /// Loss and gradient at `latents` with the noise of `iteration`.
    pub fn evaluate(&self, latents: &LatentPyramid, iteration: u64) -> Result<ObjectiveValue> {
        let (rate_bits, noisy, d_rate) =
            rate_proxy(latents, self.latent_step, self.seed, iteration);
        let x_hat = self.synthesis.synthesize(&noisy.grids);
        let diff: Vec<f64> = x_hat
            .iter()
            .zip(self.x.data())
            .map(|(a, b)| a - b)
            .collect();
        let mut distortion: f64 = diff.iter().map(|d| d * d).sum();
        let mut d_x: Vec<f64> = diff.iter().map(|d| 2.0 * d).collect();
        match &self.regularizer {
            Regularizer::None => {}
            Regularizer::Linear(g) => {
                distortion += g.dot(&diff);
                for (d, gv) in d_x.iter_mut().zip(g.data()) {
                    *d += gv;
                }
            }
            Regularizer::Direct { members, smoothing } => {
                let img = Image::new(self.x.geometry(), x_hat)?;
                for &(metric, tau) in members {
                    if !tau.is_finite() {
                        return Err(Error::UnresolvedWeight(metric.name().to_owned()));
                    }
                    let e = match smoothing {
                        Some(cfg) => {
                            let cfg = SmoothingConfig {
                                seed: cfg.seed ^ SMOOTH_STREAM ^ iteration,
                                ..*cfg
                            };
                            smooth_evaluate(metric, &img, &cfg)?
                        }
                        None => metric.evaluate(&img)?,
                    };
                    distortion += tau * e.score;
                    for (d, gv) in d_x.iter_mut().zip(e.gradient.data()) {
                        *d += tau * gv;
                    }
                }
            }
        }
        let inv_step = 1.0 / self.latent_step;
        let grids = self
            .synthesis
            .adjoint(&d_x)
            .into_iter()
            .zip(&d_rate.grids)
            .map(|(g, r)| {
                g.iter()
                    .zip(r)
                    .map(|(a, b)| a + self.lambda * inv_step * b)
                    .collect()
            })
            .collect();
        let log_b = d_rate.log_b.iter().map(|d| self.lambda * d).collect();
        Ok(ObjectiveValue {
            loss: distortion + self.lambda * rate_bits,
            distortion,
            rate_bits,
            grad: LatentPyramid { grids, log_b },
        })
    }
}

/// `tau_bar_i = ||x - x_hat_w||^2 / |b_i(x_hat_w)|`.
pub fn calibrate_tau_warmup(x: &Image, x_hat_w: &Image, scores: &[f64]) -> Result<Vec<f64>> {
    let err = sse(x, x_hat_w)?;
    scores
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            if !b.is_finite() || b.abs() < MIN_WARMUP_SCORE {
                return Err(Error::DegenerateMetric(format!(
                    "ensemble member {i} scores {b} at the warm-up reconstruction"
                )));
            }
            Ok(err / b.abs())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounters {
    pub score_evals: u64,
    pub grad_evals: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverfitResult {
    #[serde(skip)]
    pub reconstruction: Image,
    pub bpp: f64,
    pub psnr_db: f64,
    /// Ideal codelength of the rounded latents.
    pub rate_bits: f64,
    /// Noisy-proxy rate at the last training iteration.
    pub proxy_rate_bits: f64,
    pub scores: BTreeMap<String, f64>,
    pub counters: EvalCounters,
    /// Effective metric weights of the main phase.
    pub taus: Vec<f64>,
    pub loss_at_warmup: f64,
    pub final_loss: f64,
    pub ms_warmup: f64,
    pub ms_main: f64,
}

impl OverfitResult {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))
    }
}

struct Optimizer {
    grids: Vec<Adam>,
    log_b: Adam,
    cfg: AdamConfig,
    total: usize,
}

impl Optimizer {
    fn new(cfg: AdamConfig, latents: &LatentPyramid, total: usize) -> Self {
        Optimizer {
            grids: latents
                .grids
                .iter()
                .map(|g| Adam::new(cfg, g.len()))
                .collect(),
            log_b: Adam::new(cfg, latents.log_b.len()),
            cfg,
            total,
        }
    }

    fn step(&mut self, latents: &mut LatentPyramid, grad: &LatentPyramid, t: usize) {
        let lr = self.cfg.step_size(t, self.total);
        for ((a, p), g) in self
            .grids
            .iter_mut()
            .zip(&mut latents.grids)
            .zip(&grad.grids)
        {
            a.step(p, g, lr);
        }
        self.log_b.step(&mut latents.log_b, &grad.log_b, lr);
    }
}

/// Fits the codec to `x`. `members` are the ensemble metrics in entry order
/// (ignored by the sse objective); `eval` metrics score the final
/// reconstruction and are not counted.
pub fn train(
    x: &Image,
    cfg: &OverfitConfig,
    members: &[SharedMetric],
    eval: &[SharedMetric],
) -> Result<OverfitResult> {
    cfg.validate()?;
    let objective = cfg.objective;
    let spec = cfg.ensemble.as_ref();
    if objective.uses_metrics() && spec.is_some_and(|s| s.entries.len() != members.len()) {
        return Err(Error::invalid(
            "member count does not match ensemble entries",
        ));
    }
    let counted: Vec<Arc<CountingMetric>> = if objective.uses_metrics() {
        members
            .iter()
            .map(|m| Arc::new(CountingMetric::new(m.clone())))
            .collect()
    } else {
        Vec::new()
    };

    let synthesis = Synthesis::new(x.geometry(), cfg.scales);
    let mut latents = LatentPyramid::zeros(&synthesis);
    let mut opt = Optimizer::new(cfg.optimizer, &latents, cfg.iterations);
    let mut obj = TrainingObjective {
        x,
        synthesis: &synthesis,
        regularizer: Regularizer::None,
        lambda: cfg.lambda,
        latent_step: cfg.latent_step,
        seed: cfg.seed,
    };

    let start = Instant::now();
    for t in 0..cfg.warmup {
        let v = obj.evaluate(&latents, t as u64)?;
        opt.step(&mut latents, &v.grad, t);
    }
    let ms_warmup = start.elapsed().as_secs_f64() * 1e3;

    let start = Instant::now();
    let mut taus = Vec::new();
    if let (true, Some(spec)) = (objective.uses_metrics(), spec) {
        let coded_w = latents.rounded(cfg.latent_step);
        let x_hat_w = Image::new(x.geometry(), synthesis.synthesize(&coded_w.grids))?.clamped();
        for (m, e) in counted.iter().zip(&spec.entries) {
            let tau_bar = match e.weight {
                Weight::Value(v) => v,
                Weight::Auto => calibrate_tau_warmup(x, &x_hat_w, &[m.score(&x_hat_w)?])?[0],
            };
            taus.push(spec.alpha * tau_bar);
        }
        log::debug!("{objective}: warm-up weights {taus:?}");
        let weighted: Vec<(&dyn Metric, f64)> = counted
            .iter()
            .zip(&taus)
            .map(|(m, &t)| (m.as_ref() as &dyn Metric, t))
            .collect();
        obj.regularizer = match objective {
            Objective::Lnrm | Objective::Slnrm => {
                Regularizer::Linear(ensemble_grad(&weighted, x, cfg.smoothing().as_ref())?)
            }
            _ => Regularizer::Direct {
                members: weighted,
                smoothing: cfg.smoothing(),
            },
        };
    }
    let mut loss_at_warmup = f64::NAN;
    let mut final_loss = f64::NAN;
    let mut proxy_rate_bits = f64::NAN;
    for t in cfg.warmup..cfg.iterations {
        let v = obj.evaluate(&latents, t as u64)?;
        if t == cfg.warmup {
            loss_at_warmup = v.loss;
        }
        if t + 1 == cfg.iterations {
            final_loss = v.loss;
            proxy_rate_bits = v.rate_bits;
        }
        opt.step(&mut latents, &v.grad, t);
    }
    let ms_main = start.elapsed().as_secs_f64() * 1e3;
    drop(obj);

    let coded = latents.rounded(cfg.latent_step);
    let rate_bits = coded.codelength(cfg.latent_step);
    let reconstruction = Image::new(x.geometry(), synthesis.synthesize(&coded.grids))?.clamped();
    let mut scores = BTreeMap::new();
    for m in eval {
        scores.insert(m.name().to_owned(), m.score(&reconstruction)?);
    }
    let mut counters = EvalCounters::default();
    for m in &counted {
        let (s, g) = m.counts();
        counters.score_evals += s;
        counters.grad_evals += g;
    }
    Ok(OverfitResult {
        bpp: rate_bits / (x.width() * x.height()) as f64,
        psnr_db: psnr(x, &reconstruction)?,
        reconstruction,
        rate_bits,
        proxy_rate_bits,
        scores,
        counters,
        taus,
        loss_at_warmup,
        final_loss,
        ms_warmup,
        ms_main,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Geometry;

    #[test]
    fn objective_names_round_trip() {
        for o in Objective::ALL {
            assert_eq!(o.to_string().parse::<Objective>().unwrap(), o);
            let json = serde_json::to_string(&o).unwrap();
            assert_eq!(json, format!("\"{o}\""));
        }
        assert!("nrm2".parse::<Objective>().is_err());
    }

    #[test]
    fn config_validation() {
        OverfitConfig::sse(0.001).validate().unwrap();
        let bad = OverfitConfig {
            warmup: 2000,
            ..OverfitConfig::sse(0.001)
        };
        assert!(bad.validate().is_err());
        assert!(OverfitConfig::sse(0.0).validate().is_err());
        let bad = OverfitConfig {
            objective: Objective::Lnrm,
            ..OverfitConfig::sse(0.001)
        };
        assert!(bad.validate().is_err());
        let json = r#"{"lambda": 0.001, "objective": "s-nrm", "bogus": 1}"#;
        assert!(serde_json::from_str::<OverfitConfig>(json).is_err());
    }

    #[test]
    fn warmup_calibration_closed_forms() {
        let g = Geometry::new(1, 1, 1).unwrap();
        let x = Image::filled(g, 0.0);
        let x_hat = Image::filled(g, 10.0);
        assert_eq!(
            calibrate_tau_warmup(&x, &x_hat, &[0.5]).unwrap(),
            vec![200.0]
        );
        assert_eq!(
            calibrate_tau_warmup(&x, &x_hat, &[-0.5]).unwrap(),
            vec![200.0]
        );
        assert_eq!(calibrate_tau_warmup(&x, &x, &[3.0]).unwrap(), vec![0.0]);
        assert!(matches!(
            calibrate_tau_warmup(&x, &x_hat, &[1e-13]),
            Err(Error::DegenerateMetric(_))
        ));
    }

    #[test]
    fn rounded_latents_have_integer_codes() {
        let g = Geometry::new(8, 8, 1).unwrap();
        let syn = Synthesis::new(g, 2);
        let mut l = LatentPyramid::zeros(&syn);
        l.grids[0][3] = 0.1;
        let r = l.rounded(0.25);
        assert_eq!(r.grids[0][3], 0.0);
        l.grids[1][0] = -0.4;
        assert_eq!(l.rounded(0.25).grids[1][0], -0.5);
        let zero_bits = LatentPyramid::zeros(&syn).codelength(0.25);
        assert!((zero_bits - 80.0 * laplace_bits(0.0, 1.0).0).abs() < 1e-9);
    }
}
