//! Differentiable quality metrics, ensembles of them, and gradient-field
//! interchange with external metric implementations.
//!
//! Every metric follows the loss convention (lower = better). Scores from
//! "higher is better" models must be negated before they enter here.

mod builtin;
mod ngf;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use builtin::{Blockiness, Sharpness, TvCharbonnier, BLOCK_GRID, CHARBONNIER_EPS};
pub use ngf::{decode_ngf, encode_ngf, load_ngf, save_ngf, NGF_MAGIC};

use crate::error::{Error, Result};
use crate::image::{GradientField, Image};
use crate::smoothing::{self, SmoothingConfig};

/// A metric value together with its input gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricEvaluation {
    pub score: f64,
    pub gradient: GradientField,
}

pub trait Metric: Send + Sync {
    fn name(&self) -> &str;

    fn score(&self, x: &Image) -> Result<f64>;

    fn grad(&self, x: &Image) -> Result<GradientField>;

    fn evaluate(&self, x: &Image) -> Result<MetricEvaluation> {
        Ok(MetricEvaluation {
            score: self.score(x)?,
            gradient: self.grad(x)?,
        })
    }

    /// True for metrics that only carry a precomputed evaluation at one input
    /// and cannot be re-evaluated elsewhere.
    fn is_frozen(&self) -> bool {
        false
    }
}

pub type SharedMetric = Arc<dyn Metric>;

/// Identifies a metric: one of the built-ins or an external NGF file.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricId {
    TvCharbonnier,
    Sharpness,
    Blockiness,
    External(PathBuf),
}

impl MetricId {
    pub const BUILTINS: [MetricId; 3] = [
        MetricId::TvCharbonnier,
        MetricId::Sharpness,
        MetricId::Blockiness,
    ];

    pub fn instantiate(&self) -> Result<SharedMetric> {
        Ok(match self {
            MetricId::TvCharbonnier => Arc::new(TvCharbonnier),
            MetricId::Sharpness => Arc::new(Sharpness),
            MetricId::Blockiness => Arc::new(Blockiness),
            MetricId::External(path) => Arc::new(ExternalMetric::load(path)?),
        })
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricId::TvCharbonnier => f.write_str("tv-charbonnier"),
            MetricId::Sharpness => f.write_str("sharpness"),
            MetricId::Blockiness => f.write_str("blockiness"),
            MetricId::External(p) => write!(f, "external:{}", p.display()),
        }
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tv-charbonnier" => Ok(MetricId::TvCharbonnier),
            "sharpness" => Ok(MetricId::Sharpness),
            "blockiness" => Ok(MetricId::Blockiness),
            _ => match s.strip_prefix("external:") {
                Some(path) if !path.is_empty() => Ok(MetricId::External(PathBuf::from(path))),
                _ => Err(Error::UnknownMetric(s.to_owned())),
            },
        }
    }
}

impl Serialize for MetricId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetricId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Precomputed evaluation loaded from an NGF file. Score and gradient are
/// returned for any input of matching geometry.
#[derive(Clone, Debug)]
pub struct ExternalMetric {
    name: String,
    evaluation: MetricEvaluation,
}

impl ExternalMetric {
    pub fn new(name: impl Into<String>, evaluation: MetricEvaluation) -> Self {
        ExternalMetric {
            name: name.into(),
            evaluation,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (evaluation, name) = load_ngf(path, None)?;
        Ok(ExternalMetric { name, evaluation })
    }
}

impl Metric for ExternalMetric {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, x: &Image) -> Result<f64> {
        self.evaluation
            .gradient
            .geometry()
            .ensure_same(&x.geometry())?;
        Ok(self.evaluation.score)
    }

    fn grad(&self, x: &Image) -> Result<GradientField> {
        self.evaluation
            .gradient
            .geometry()
            .ensure_same(&x.geometry())?;
        Ok(self.evaluation.gradient.clone())
    }

    fn is_frozen(&self) -> bool {
        true
    }
}

/// `factor * inner`, for rescaling experiments.
pub struct ScaledMetric {
    inner: SharedMetric,
    factor: f64,
    name: String,
}

impl ScaledMetric {
    pub fn new(inner: SharedMetric, factor: f64) -> Self {
        let name = format!("{}*{factor}", inner.name());
        ScaledMetric {
            inner,
            factor,
            name,
        }
    }
}

impl Metric for ScaledMetric {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, x: &Image) -> Result<f64> {
        Ok(self.factor * self.inner.score(x)?)
    }

    fn grad(&self, x: &Image) -> Result<GradientField> {
        Ok(self.inner.grad(x)?.scaled(self.factor))
    }

    fn is_frozen(&self) -> bool {
        self.inner.is_frozen()
    }
}

/// Counts score and gradient evaluations of the wrapped metric.
pub struct CountingMetric {
    inner: SharedMetric,
    scores: AtomicU64,
    grads: AtomicU64,
}

impl CountingMetric {
    pub fn new(inner: SharedMetric) -> Self {
        CountingMetric {
            inner,
            scores: AtomicU64::new(0),
            grads: AtomicU64::new(0),
        }
    }

    /// `(score evaluations, gradient evaluations)` so far.
    pub fn counts(&self) -> (u64, u64) {
        (
            self.scores.load(Ordering::Relaxed),
            self.grads.load(Ordering::Relaxed),
        )
    }
}

impl Metric for CountingMetric {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn score(&self, x: &Image) -> Result<f64> {
        self.scores.fetch_add(1, Ordering::Relaxed);
        self.inner.score(x)
    }

    fn grad(&self, x: &Image) -> Result<GradientField> {
        self.grads.fetch_add(1, Ordering::Relaxed);
        self.inner.grad(x)
    }

    fn is_frozen(&self) -> bool {
        self.inner.is_frozen()
    }
}

/// Metrics by unique name.
#[derive(Default, Clone)]
pub struct MetricRegistry {
    metrics: BTreeMap<String, SharedMetric>,
}

impl MetricRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        for id in MetricId::BUILTINS {
            r.register(
                id.instantiate()
                    .expect("built-in metrics always instantiate"),
            )
            .expect("built-in names are unique");
        }
        r
    }

    pub fn register(&mut self, metric: SharedMetric) -> Result<()> {
        let name = metric.name().to_owned();
        if self.metrics.contains_key(&name) {
            return Err(Error::invalid(format!("metric `{name}` registered twice")));
        }
        self.metrics.insert(name, metric);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<SharedMetric> {
        self.metrics
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownMetric(name.to_owned()))
    }

    /// Built-ins resolve by name; external ids load their NGF file.
    pub fn resolve(&self, id: &MetricId) -> Result<SharedMetric> {
        match id {
            MetricId::External(_) => id.instantiate(),
            _ => self.get(&id.to_string()),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.metrics.keys().map(String::as_str)
    }
}

/// An ensemble member weight: explicit, or calibrated before optimization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weight {
    Auto,
    Value(f64),
}

impl Weight {
    pub fn resolved(self) -> Option<f64> {
        match self {
            Weight::Value(v) => Some(v),
            Weight::Auto => None,
        }
    }
}

impl Serialize for Weight {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Weight::Auto => s.serialize_str("auto"),
            Weight::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Weight::Value(v)),
            Raw::Str(s) if s == "auto" => Ok(Weight::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "weight must be a number or \"auto\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleEntry {
    pub metric: MetricId,
    pub weight: Weight,
}

/// Weighted metric ensemble with a global trade-off `alpha` and optional
/// Monte-Carlo smoothing of every member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricEnsembleSpec {
    pub entries: Vec<EnsembleEntry>,
    pub alpha: f64,
    #[serde(default)]
    pub smoothing: Option<SmoothingConfig>,
}

impl MetricEnsembleSpec {
    /// Single metric with `auto` weight.
    pub fn single(metric: MetricId, alpha: f64) -> Self {
        MetricEnsembleSpec {
            entries: vec![EnsembleEntry {
                metric,
                weight: Weight::Auto,
            }],
            alpha,
            smoothing: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::invalid("ensemble needs at least one metric"));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::invalid(format!(
                "alpha {} must be finite and >= 0",
                self.alpha
            )));
        }
        for e in &self.entries {
            if let Weight::Value(v) = e.weight {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::invalid(format!(
                        "weight {v} of `{}` must be finite and >= 0",
                        e.metric
                    )));
                }
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(&e.metric) {
                return Err(Error::invalid(format!(
                    "metric `{}` listed twice",
                    e.metric
                )));
            }
        }
        if let Some(s) = &self.smoothing {
            s.validate()?;
        }
        Ok(())
    }

    /// Instantiates every member in entry order.
    pub fn instantiate(&self, registry: &MetricRegistry) -> Result<Vec<SharedMetric>> {
        self.validate()?;
        self.entries
            .iter()
            .map(|e| registry.resolve(&e.metric))
            .collect()
    }
}

/// Gradient of one member, smoothed when `smoothing` is set.
pub fn member_grad(
    metric: &dyn Metric,
    x: &Image,
    smoothing: Option<&SmoothingConfig>,
) -> Result<GradientField> {
    match smoothing {
        Some(cfg) => smoothing::smooth_grad(metric, x, cfg),
        None => metric.grad(x),
    }
}

/// `sum_i tau_i * grad b_i(x)`, each member evaluated once and accumulated in
/// member order.
pub fn ensemble_grad(
    members: &[(&dyn Metric, f64)],
    x: &Image,
    smoothing: Option<&SmoothingConfig>,
) -> Result<GradientField> {
    let mut acc = GradientField::zeros(x.geometry());
    for &(metric, tau) in members {
        if !tau.is_finite() {
            return Err(Error::UnresolvedWeight(metric.name().to_owned()));
        }
        let g = member_grad(metric, x, smoothing)?;
        acc.add_scaled(&g, tau)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Geometry;
    use crate::rng::Stream;

    fn random_image(seed: u64) -> Image {
        let mut s = Stream::new(seed, 0);
        Image::from_fn(Geometry::new(12, 10, 1).unwrap(), |_, _, _| s.uniform())
    }

    #[test]
    fn metric_ids_parse_and_print() {
        for id in MetricId::BUILTINS {
            assert_eq!(id.to_string().parse::<MetricId>().unwrap(), id);
        }
        let ext: MetricId = "external:/tmp/q.ngf".parse().unwrap();
        assert_eq!(ext, MetricId::External("/tmp/q.ngf".into()));
        assert!(matches!(
            "niqe".parse::<MetricId>(),
            Err(Error::UnknownMetric(_))
        ));
        assert!("external:".parse::<MetricId>().is_err());
    }

    #[test]
    fn registry_rejects_duplicates_and_unknown_names() {
        let mut r = MetricRegistry::with_builtins();
        assert_eq!(r.names().count(), 3);
        assert!(r.register(Arc::new(Sharpness)).is_err());
        assert!(matches!(r.get("musiq"), Err(Error::UnknownMetric(_))));
    }

    #[test]
    fn ensemble_identity_linearity_and_zero() {
        let x = random_image(1);
        let tv = TvCharbonnier;
        let sh = Sharpness;
        let single = ensemble_grad(&[(&tv, 1.0)], &x, None).unwrap();
        assert_eq!(single, tv.grad(&x).unwrap());

        let pair = ensemble_grad(&[(&tv, 2.0), (&sh, 3.0)], &x, None).unwrap();
        let g1 = tv.grad(&x).unwrap();
        let g2 = sh.grad(&x).unwrap();
        for ((p, a), b) in pair.data().iter().zip(g1.data()).zip(g2.data()) {
            assert!((p - (2.0 * a + 3.0 * b)).abs() < 1e-12);
        }

        let zero = ensemble_grad(&[(&tv, 0.0), (&sh, 0.0)], &x, None).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ensemble_is_linear_in_weights() {
        let x = random_image(2);
        let (tv, bl) = (TvCharbonnier, Blockiness);
        let a = ensemble_grad(&[(&tv, 0.7), (&bl, 1.3)], &x, None).unwrap();
        let b = ensemble_grad(&[(&tv, 0.2), (&bl, 2.1)], &x, None).unwrap();
        let ab = ensemble_grad(&[(&tv, 0.9), (&bl, 3.4)], &x, None).unwrap();
        for ((s, p), q) in ab.data().iter().zip(a.data()).zip(b.data()) {
            assert!((s - (p + q)).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_and_counting_wrappers() {
        let x = random_image(3);
        let base: SharedMetric = Arc::new(Sharpness);
        let scaled = ScaledMetric::new(base.clone(), 2.5);
        let g = base.grad(&x).unwrap();
        let gs = scaled.grad(&x).unwrap();
        for (a, b) in g.data().iter().zip(gs.data()) {
            assert_eq!(2.5 * a, *b);
        }
        let counting = CountingMetric::new(base);
        counting.evaluate(&x).unwrap();
        counting.score(&x).unwrap();
        assert_eq!(counting.counts(), (2, 1));
    }

    #[test]
    fn weights_deserialize_from_number_or_auto() {
        let spec: MetricEnsembleSpec = serde_json::from_str(
            r#"{"entries":[{"metric":"sharpness","weight":"auto"},
                           {"metric":"blockiness","weight":0.5}],
                "alpha":1.0}"#,
        )
        .unwrap();
        assert_eq!(spec.entries[0].weight, Weight::Auto);
        assert_eq!(spec.entries[1].weight, Weight::Value(0.5));
        spec.validate().unwrap();
        assert!(serde_json::from_str::<MetricEnsembleSpec>(
            r#"{"entries":[],"alpha":1.0,"bogus":1}"#
        )
        .is_err());
        let empty = MetricEnsembleSpec {
            entries: vec![],
            alpha: 1.0,
            smoothing: None,
        };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn external_metric_checks_geometry() {
        let x = random_image(4);
        let eval = Sharpness.evaluate(&x).unwrap();
        let ext = ExternalMetric::new("frozen", eval.clone());
        assert_eq!(ext.score(&x).unwrap(), eval.score);
        assert!(ext.is_frozen());
        let other = Image::filled(Geometry::new(3, 3, 1).unwrap(), 0.0);
        assert!(ext.grad(&other).is_err());
    }
}
