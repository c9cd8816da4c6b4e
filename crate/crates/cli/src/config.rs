//! Run configuration: a JSON document, then `--set` overrides, then
//! schema and semantic validation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lnrm_core::metrics::{MetricId, MetricRegistry, SharedMetric};
use lnrm_core::overfit::{OverfitConfig, PROTOCOL_LAMBDAS};
use lnrm_core::rdo::{RdoConfig, PROTOCOL_QPS};
use lnrm_core::smoothing::SmoothingConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

fn protocol_qps() -> Vec<i32> {
    PROTOCOL_QPS.to_vec()
}

fn protocol_lambdas() -> Vec<f64> {
    PROTOCOL_LAMBDAS.to_vec()
}

fn default_rdo() -> RdoConfig {
    RdoConfig::sse(PROTOCOL_QPS[0])
}

fn default_overfit() -> OverfitConfig {
    OverfitConfig::sse(PROTOCOL_LAMBDAS[0])
}

fn builtin_eval() -> Vec<MetricId> {
    MetricId::BUILTINS.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// QPs of a sweep; each replaces `rdo.base_qp`.
    #[serde(default = "protocol_qps")]
    pub qps: Vec<i32>,
    /// Lambdas of an overfit run; each replaces `overfit.lambda`.
    #[serde(default = "protocol_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_rdo")]
    pub rdo: RdoConfig,
    #[serde(default = "default_overfit")]
    pub overfit: OverfitConfig,
    /// Metrics scored on every reconstruction.
    #[serde(default = "builtin_eval")]
    pub eval: Vec<MetricId>,
    #[serde(default)]
    pub eval_smoothing: Option<SmoothingConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

/// Error in the user's configuration (exit code 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Value> {
        match path {
            None => Ok(serde_json::to_value(RunConfig::default())?),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn from_value(v: Value) -> Result<Self> {
        serde_json::from_value(v).map_err(|e| config_err(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let check = |r: lnrm_core::Result<()>| r.map_err(|e| config_err(e.to_string()));
        if self.qps.is_empty() || self.qps.windows(2).any(|w| w[0] >= w[1]) {
            bail!(config_err("qps must be non-empty and strictly increasing"));
        }
        for &qp in &self.qps {
            let mut r = self.rdo.clone();
            r.base_qp = qp;
            check(r.validate())?;
        }
        if self.lambdas.is_empty() {
            bail!(config_err("lambdas must be non-empty"));
        }
        for &l in &self.lambdas {
            let mut o = self.overfit.clone();
            o.lambda = l;
            check(o.validate())?;
        }
        if let Some(s) = &self.eval_smoothing {
            check(s.validate())?;
        }
        Ok(())
    }

    pub fn eval_metrics(&self) -> Result<Vec<SharedMetric>> {
        let registry = MetricRegistry::with_builtins();
        Ok(self
            .eval
            .iter()
            .map(|id| registry.resolve(id))
            .collect::<lnrm_core::Result<_>>()?)
    }
}

/// Applies `key.path=value`. The value is read as JSON when it parses,
/// otherwise as a plain string. Numeric segments index arrays.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("override `{assignment}` is not key=value")))?;
    if key.is_empty() {
        bail!(config_err(format!(
            "override `{assignment}` has an empty key"
        )));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut node = root;
    let segments: Vec<&str> = key.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert((*seg).to_owned(), value);
                    return Ok(());
                }
                map.entry((*seg).to_owned()).or_insert(Value::Null)
            }
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| config_err(format!("`{key}`: `{seg}` is not an array index")))?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    config_err(format!("`{key}`: index {idx} out of range ({len})"))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => bail!(config_err(format!("`{key}`: `{seg}` is inside a scalar"))),
        };
    }
    unreachable!("loop returns on the last segment")
}
