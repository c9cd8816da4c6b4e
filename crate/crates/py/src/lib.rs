//! Python module `lnrm`. Images cross the boundary as flat channel-planar
//! float lists plus `width, height, channels`.

use std::borrow::Cow;

use lnrm_core::blockcodec::{decode as decode_stream, Bitstream};
use lnrm_core::metrics::{
    EnsembleEntry, MetricEnsembleSpec, MetricEvaluation, MetricId, MetricRegistry, SharedMetric,
    Weight,
};
use lnrm_core::rdo::{rdo_encode, RdoConfig};
use lnrm_core::smoothing::SmoothingConfig;
use lnrm_core::{Geometry, GradientField, Image};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: lnrm_core::Error) -> PyErr {
    match e {
        lnrm_core::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Flat = (Vec<f64>, usize, usize, usize);
type Ngf = (String, f64, (usize, usize, usize), Vec<f64>);

fn image(data: Vec<f64>, width: usize, height: usize, channels: usize) -> PyResult<Image> {
    let g = Geometry::new(width, height, channels).map_err(py_err)?;
    Image::new(g, data).map_err(py_err)
}

fn flat(img: Image) -> Flat {
    let g = img.geometry();
    (img.into_data(), g.width, g.height, g.channels)
}

fn metric(name: &str) -> PyResult<SharedMetric> {
    let id: MetricId = name.parse().map_err(py_err)?;
    MetricRegistry::with_builtins().resolve(&id).map_err(py_err)
}

/// Score of a metric (lower is better).
#[pyfunction]
#[pyo3(signature = (metric_name, data, width, height, channels=1))]
pub fn metric_score(
    metric_name: &str,
    data: Vec<f64>,
    width: usize,
    height: usize,
    channels: usize,
) -> PyResult<f64> {
    let x = image(data, width, height, channels)?;
    metric(metric_name)?.score(&x).map_err(py_err)
}

/// Input gradient of a metric.
#[pyfunction]
#[pyo3(signature = (metric_name, data, width, height, channels=1))]
pub fn metric_grad(
    metric_name: &str,
    data: Vec<f64>,
    width: usize,
    height: usize,
    channels: usize,
) -> PyResult<Vec<f64>> {
    let x = image(data, width, height, channels)?;
    let g = metric(metric_name)?.grad(&x).map_err(py_err)?;
    Ok(g.data().to_vec())
}

/// Gradient averaged over `samples` seeded Gaussian perturbations.
#[pyfunction]
#[pyo3(signature = (metric_name, data, width, height, channels=1, sigma=0.01, samples=5, seed=0))]
#[allow(clippy::too_many_arguments)]
pub fn smooth_grad(
    metric_name: &str,
    data: Vec<f64>,
    width: usize,
    height: usize,
    channels: usize,
    sigma: f64,
    samples: usize,
    seed: u64,
) -> PyResult<Vec<f64>> {
    let x = image(data, width, height, channels)?;
    let cfg = SmoothingConfig {
        sigma,
        samples,
        seed,
    };
    cfg.validate().map_err(py_err)?;
    let m = metric(metric_name)?;
    let g = lnrm_core::smoothing::smooth_grad(m.as_ref(), &x, &cfg).map_err(py_err)?;
    Ok(g.data().to_vec())
}

/// Reads PGM, PPM or `.imgf32` as `(data, width, height, channels)`.
#[pyfunction]
pub fn load_image(path: &str) -> PyResult<Flat> {
    Ok(flat(lnrm_core::io::load_image(path).map_err(py_err)?))
}

/// Writes by extension: `.pgm`, `.ppm`, otherwise `.imgf32`.
#[pyfunction]
#[pyo3(signature = (path, data, width, height, channels=1))]
pub fn save_image(
    path: &str,
    data: Vec<f64>,
    width: usize,
    height: usize,
    channels: usize,
) -> PyResult<()> {
    let img = image(data, width, height, channels)?;
    lnrm_core::io::save_image(&img, path).map_err(py_err)
}

/// Deterministic synthetic test image number `index`.
#[pyfunction]
#[pyo3(signature = (index, width, height, channels=1))]
pub fn corpus_image(
    index: usize,
    width: usize,
    height: usize,
    channels: usize,
) -> PyResult<Vec<f64>> {
    let g = Geometry::new(width, height, channels).map_err(py_err)?;
    Ok(lnrm_core::synth::corpus_image(index, g).into_data())
}

/// RDO encode at `qp`. With `metrics`, the linearized ensemble (calibrated
/// weights, trade-off `alpha`) joins SSE in the block decisions. Returns
/// `(bitstream, reconstruction, bits)`.
#[pyfunction]
#[pyo3(signature = (data, width, height, channels=1, qp=28, metrics=None, alpha=1.0))]
#[allow(clippy::too_many_arguments)]
pub fn encode(
    data: Vec<f64>,
    width: usize,
    height: usize,
    channels: usize,
    qp: i32,
    metrics: Option<Vec<String>>,
    alpha: f64,
) -> PyResult<(Cow<'static, [u8]>, Vec<f64>, u64)> {
    let x = image(data, width, height, channels)?;
    let (cfg, members) = match metrics {
        None => (RdoConfig::sse(qp), Vec::new()),
        Some(names) => {
            let entries = names
                .iter()
                .map(|n| {
                    Ok(EnsembleEntry {
                        metric: n.parse().map_err(py_err)?,
                        weight: Weight::Auto,
                    })
                })
                .collect::<PyResult<Vec<_>>>()?;
            let spec = MetricEnsembleSpec {
                entries,
                alpha,
                smoothing: None,
            };
            let members = spec
                .instantiate(&MetricRegistry::with_builtins())
                .map_err(py_err)?;
            (RdoConfig::lnrm(qp, spec), members)
        }
    };
    let out = rdo_encode(&x, &cfg, &members).map_err(py_err)?;
    let bits = out.bits();
    Ok((
        Cow::Owned(out.bitstream.to_bytes()),
        out.reconstruction.into_data(),
        bits,
    ))
}

/// Decodes a bitstream to `(data, width, height, channels)`.
#[pyfunction]
pub fn decode(bitstream: &[u8]) -> PyResult<Flat> {
    let s = Bitstream::from_bytes(bitstream).map_err(py_err)?;
    Ok(flat(decode_stream(&s).map_err(py_err)?))
}

/// PSNR in dB (peak 1); infinite for identical inputs.
#[pyfunction]
#[pyo3(signature = (a, b, width, height, channels=1))]
pub fn psnr(
    a: Vec<f64>,
    b: Vec<f64>,
    width: usize,
    height: usize,
    channels: usize,
) -> PyResult<f64> {
    let (a, b) = (
        image(a, width, height, channels)?,
        image(b, width, height, channels)?,
    );
    lnrm_core::psnr(&a, &b).map_err(py_err)
}

/// BD-rate in percent of `test` against `reference`, both `(rate, quality)` lists.
#[pyfunction]
pub fn bd_rate(reference: Vec<(f64, f64)>, test: Vec<(f64, f64)>) -> PyResult<f64> {
    lnrm_core::analysis::bd_rate(&reference, &test).map_err(py_err)
}

#[pyfunction]
pub fn spearman(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    lnrm_core::analysis::spearman(&a, &b).map_err(py_err)
}

/// Reads an NGF file as `(name, score, (width, height, channels), gradient)`.
#[pyfunction]
pub fn load_ngf(path: &str) -> PyResult<Ngf> {
    let (eval, name) = lnrm_core::metrics::load_ngf(path, None).map_err(py_err)?;
    let g = eval.gradient.geometry();
    Ok((
        name,
        eval.score,
        (g.width, g.height, g.channels),
        eval.gradient.data().to_vec(),
    ))
}

/// Writes a score and gradient as NGF (gradient stored as 32-bit floats).
#[pyfunction]
#[pyo3(signature = (path, name, score, gradient, width, height, channels=1))]
pub fn save_ngf(
    path: &str,
    name: &str,
    score: f64,
    gradient: Vec<f64>,
    width: usize,
    height: usize,
    channels: usize,
) -> PyResult<()> {
    let g = Geometry::new(width, height, channels).map_err(py_err)?;
    let gradient = GradientField::new(g, gradient).map_err(py_err)?;
    lnrm_core::metrics::save_ngf(&MetricEvaluation { score, gradient }, name, path).map_err(py_err)
}

/// Built-in invariant checks as `(name, passed, detail)`.
#[pyfunction]
pub fn selftest() -> Vec<(String, bool, String)> {
    lnrm_core::selftest::run()
        .into_iter()
        .map(|c| (c.name.to_owned(), c.passed, c.detail))
        .collect()
}

#[pymodule]
fn lnrm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(metric_score, m)?)?;
    m.add_function(wrap_pyfunction!(metric_grad, m)?)?;
    m.add_function(wrap_pyfunction!(smooth_grad, m)?)?;
    m.add_function(wrap_pyfunction!(load_image, m)?)?;
    m.add_function(wrap_pyfunction!(save_image, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_image, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(bd_rate, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(load_ngf, m)?)?;
    m.add_function(wrap_pyfunction!(save_ngf, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
