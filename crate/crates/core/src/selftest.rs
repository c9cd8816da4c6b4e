//! Fast invariant checks runnable from an installed binary.

use serde::Serialize;

use crate::analysis::{bd_rate, mds_embed, procrustes_residual};
use crate::blockcodec::{code_block, decode, decode_block, encode_fixed, Bitstream, Partition};
use crate::image::{Geometry, Image};
use crate::metrics::{Blockiness, Metric, Sharpness, TvCharbonnier};
use crate::overfit::Synthesis;
use crate::rdo::{rdo_encode, RdoConfig};
use crate::rng::Stream;
use crate::smoothing::{smooth_grad, SmoothingConfig};
use crate::synth::corpus_image;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Outcome = std::result::Result<String, String>;
type Named = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: crate::Error) -> String {
    e.to_string()
}

fn random_image(seed: u64, g: Geometry) -> Image {
    let mut s = Stream::new(seed, 0x5e1f);
    Image::from_fn(g, |_, _, _| s.uniform())
}

fn metric_gradients() -> Outcome {
    let x = random_image(1, Geometry::new(16, 16, 1).map_err(err)?);
    let h = 1e-5;
    let metrics: [&dyn Metric; 3] = [&TvCharbonnier, &Sharpness, &Blockiness];
    let mut worst = 0.0f64;
    for m in metrics {
        let g = m.grad(&x).map_err(err)?;
        for i in (0..x.len()).step_by(7) {
            let mut p = x.clone();
            p.data_mut()[i] += h;
            let mut q = x.clone();
            q.data_mut()[i] -= h;
            let fd = (m.score(&p).map_err(err)? - m.score(&q).map_err(err)?) / (2.0 * h);
            let e = (fd - g.data()[i]).abs() / g.data()[i].abs().max(1e-6);
            worst = worst.max(e);
        }
    }
    ensure(worst < 1e-5, format!("max relative error {worst:.2e}"))
}

fn block_round_trip() -> Outcome {
    let mut s = Stream::new(2, 0x5e1f);
    for case in 0..500 {
        let n = if case % 2 == 0 { 16 } else { 256 };
        let levels: Vec<i32> = (0..n)
            .map(|_| (40.0 * s.normal()).round() as i32 * (case % 3))
            .collect();
        let (_, bytes) = code_block(&levels);
        if decode_block(&bytes, n).map_err(err)? != levels {
            return Err(format!("case {case} decoded differently"));
        }
    }
    Ok("500 blocks".into())
}

fn codec_honesty() -> Outcome {
    let x = corpus_image(0, Geometry::new(40, 24, 3).map_err(err)?);
    let (stream, recon) = encode_fixed(&x, 28, Partition::Split4).map_err(err)?;
    let bytes = stream.to_bytes();
    let decoded = decode(&Bitstream::from_bytes(&bytes).map_err(err)?).map_err(err)?;
    ensure(
        decoded == recon && stream.total_bits().div_ceil(8) == bytes.len() as u64,
        format!("{} bits", stream.total_bits()),
    )
}

fn sse_equivalence() -> Outcome {
    let x = corpus_image(1, Geometry::new(32, 32, 1).map_err(err)?);
    let spec =
        crate::metrics::MetricEnsembleSpec::single(crate::metrics::MetricId::TvCharbonnier, 0.0);
    let a = rdo_encode(&x, &RdoConfig::sse(30), &[]).map_err(err)?;
    let b = rdo_encode(
        &x,
        &RdoConfig::lnrm(30, spec),
        &[std::sync::Arc::new(TvCharbonnier)],
    )
    .map_err(err)?;
    ensure(
        a.bitstream.to_bytes() == b.bitstream.to_bytes(),
        "alpha 0 matches sse".into(),
    )
}

fn smoothing_determinism() -> Outcome {
    let x = random_image(3, Geometry::new(16, 16, 1).map_err(err)?);
    let cfg = SmoothingConfig {
        sigma: 0.01,
        samples: 5,
        seed: 7,
    };
    let a = smooth_grad(&Sharpness, &x, &cfg).map_err(err)?;
    let b = smooth_grad(&Sharpness, &x, &cfg).map_err(err)?;
    ensure(a == b, "seeded gradients identical".into())
}

fn synthesis_adjoint() -> Outcome {
    let g = Geometry::new(13, 9, 3).map_err(err)?;
    let syn = Synthesis::new(g, 4);
    let mut s = Stream::new(4, 0x5e1f);
    let grids: Vec<Vec<f64>> = syn
        .grid_sizes()
        .iter()
        .map(|&n| (0..n).map(|_| s.normal()).collect())
        .collect();
    let y: Vec<f64> = (0..g.len()).map(|_| s.normal()).collect();
    let lhs: f64 = syn
        .synthesize(&grids)
        .iter()
        .zip(&y)
        .map(|(a, b)| a * b)
        .sum();
    let rhs: f64 = syn
        .adjoint(&y)
        .iter()
        .zip(&grids)
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>())
        .sum();
    let rel = (lhs - rhs).abs() / lhs.abs().max(1.0);
    ensure(rel < 1e-12, format!("relative gap {rel:.2e}"))
}

fn bd_rate_identities() -> Outcome {
    let a = [
        (0.1, 30.0),
        (0.2, 33.1),
        (0.45, 36.0),
        (0.9, 39.2),
        (1.6, 41.5),
    ];
    let b: Vec<(f64, f64)> = a.iter().map(|&(r, q)| (2.0 * r, q)).collect();
    let zero = bd_rate(&a, &a).map_err(err)?;
    let doubled = bd_rate(&a, &b).map_err(err)?;
    ensure(
        zero == 0.0 && (doubled - 100.0).abs() < 1e-9,
        format!("self {zero}, doubled {doubled:.9}"),
    )
}

fn mds_recovery() -> Outcome {
    let mut s = Stream::new(5, 0x5e1f);
    let pts: Vec<[f64; 2]> = (0..6).map(|_| [s.normal(), s.normal()]).collect();
    let d: Vec<Vec<f64>> = pts
        .iter()
        .map(|a| {
            pts.iter()
                .map(|b| (a[0] - b[0]).hypot(a[1] - b[1]))
                .collect()
        })
        .collect();
    let e = mds_embed(&d).map_err(err)?;
    let r = procrustes_residual(&e.coords, &pts).map_err(err)?;
    ensure(r < 1e-8, format!("residual {r:.2e}"))
}

/// Runs every check; a failing or erroring check is reported, not raised.
pub fn run() -> Vec<Check> {
    let checks: [Named; 8] = [
        ("metric-gradients", metric_gradients),
        ("block-round-trip", block_round_trip),
        ("codec-honesty", codec_honesty),
        ("alpha-zero-is-sse", sse_equivalence),
        ("smoothing-determinism", smoothing_determinism),
        ("synthesis-adjoint", synthesis_adjoint),
        ("bd-rate-identities", bd_rate_identities),
        ("mds-recovery", mds_recovery),
    ];
    checks
        .into_iter()
        .map(|(name, f)| {
            let (passed, detail) = match f() {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            Check {
                name,
                passed,
                detail,
            }
        })
        .collect()
}
