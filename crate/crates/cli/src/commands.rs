use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use lnrm_core::analysis::{
    bd_table, cluster, dissimilarity, emit_report, mds_embed, BdCell, Report, ScoreTable,
};
use lnrm_core::blockcodec::{decode, Bitstream};
use lnrm_core::io::{load_image, save_image, write_atomic};
use lnrm_core::metrics::{save_ngf, MetricEvaluation, MetricId, MetricRegistry, SharedMetric};
use lnrm_core::overfit::{train, Objective};
use lnrm_core::rdo::{rdo_encode, sweep, EvalSet, RdCurve, RdoMode};
use lnrm_core::smoothing::{smooth_grad, smooth_score, SmoothingConfig};
use lnrm_core::synth::{corpus_image, synth_ugc, Degradation};
use lnrm_core::{psnr, Geometry, Image};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{apply_override, ConfigError, RunConfig};
use crate::{Cli, Command, ConfigArgs, EnsembleArgs};

/// Bad command-line usage detected after parsing (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A violated internal invariant (exit code 3).
#[derive(Debug)]
pub struct InvariantError(pub String);

impl std::fmt::Display for InvariantError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "internal invariant violated: {}", self.0)
    }
}

impl std::error::Error for InvariantError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.chain().any(|c| c.is::<UsageError>()) {
        1
    } else if e.chain().any(|c| c.is::<InvariantError>()) {
        3
    } else {
        2
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DegradationKind {
    GaussianNoise,
    Precompressed,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ImageFormat {
    /// PGM for one channel, PPM for three.
    Pnm,
    Imgf32,
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            bail!(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Encode {
            input,
            output,
            recon,
            qp,
            ensemble,
            config,
        } => {
            let mut extra = Vec::new();
            if let Some(qp) = qp {
                extra.push(format!("rdo.base_qp={qp}"));
            }
            extra.extend(ensemble_overrides(&ensemble, "rdo")?);
            let Some(cfg) = resolve(&config, extra)? else {
                return Ok(());
            };
            encode(&cfg, &input, &output, recon.as_deref())
        }
        Command::Decode { input, output } => {
            let bytes =
                std::fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let img = decode(&Bitstream::from_bytes(&bytes)?)?;
            save_image(&img, &output)?;
            Ok(())
        }
        Command::Grad {
            input,
            metric,
            output,
        } => grad(&input, &metric, &output, None),
        Command::SmoothGrad {
            input,
            metric,
            output,
            sigma,
            samples,
            seed,
        } => {
            let s = SmoothingConfig {
                sigma,
                samples,
                seed,
            };
            grad(&input, &metric, &output, Some(s))
        }
        Command::Sweep {
            inputs,
            output,
            ensemble,
            config,
        } => {
            let mut extra = io_overrides(&inputs, output.as_deref())?;
            extra.extend(ensemble_overrides(&ensemble, "rdo")?);
            let Some(cfg) = resolve(&config, extra)? else {
                return Ok(());
            };
            run_sweep(&cfg)
        }
        Command::Overfit {
            inputs,
            output,
            objective,
            save_recon,
            ensemble,
            config,
        } => {
            let mut extra = io_overrides(&inputs, output.as_deref())?;
            if let Some(o) = objective {
                extra.push(format!("overfit.objective={}", Value::String(o)));
            }
            extra.extend(ensemble_overrides(&ensemble, "overfit")?);
            let Some(cfg) = resolve(&config, extra)? else {
                return Ok(());
            };
            run_overfit(&cfg, save_recon)
        }
        Command::Bdrate {
            reference,
            test,
            metrics,
            report,
        } => bdrate(&reference, &test, &metrics, report.as_deref()),
        Command::Corr { inputs, output } => {
            let table = load_scores(&inputs)?;
            let rho = table.spearman_matrix()?;
            let text = matrix_csv(&table.metrics, &rho);
            match output {
                Some(p) => write_atomic(&p, text.as_bytes())?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Mds {
            inputs,
            threshold,
            report,
        } => mds(&inputs, threshold, report.as_deref()),
        Command::SynthUgc {
            inputs,
            output,
            count,
            size,
            channels,
            degradation,
            sigma,
            qp,
            seed,
            format,
        } => {
            let degradation = match degradation {
                DegradationKind::GaussianNoise => Degradation::GaussianNoise { sigma },
                DegradationKind::Precompressed => Degradation::Precompressed { qp },
                DegradationKind::Both => Degradation::Both { sigma, qp },
            };
            synth(
                &inputs,
                &output,
                count,
                &size,
                channels,
                degradation,
                seed,
                format,
            )
        }
        Command::Selftest { json } => selftest(json),
    }
}

/// Config file, then command-line shortcuts, then `--set`, then validation.
fn resolve(args: &ConfigArgs, shortcuts: Vec<String>) -> Result<Option<RunConfig>> {
    let mut value = RunConfig::load(args.config.as_deref())?;
    for s in shortcuts.iter().chain(&args.set) {
        apply_override(&mut value, s)?;
    }
    let cfg = RunConfig::from_value(value)?;
    cfg.validate()?;
    if args.print_effective_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(None);
    }
    Ok(Some(cfg))
}

fn io_overrides(inputs: &[PathBuf], output: Option<&Path>) -> Result<Vec<String>> {
    let mut out = Vec::new();
    if !inputs.is_empty() {
        out.push(format!("inputs={}", serde_json::to_string(inputs)?));
    }
    if let Some(o) = output {
        out.push(format!("output={}", serde_json::to_string(o)?));
    }
    Ok(out)
}

fn ensemble_overrides(args: &EnsembleArgs, section: &str) -> Result<Vec<String>> {
    if args.metrics.is_empty() {
        return Ok(Vec::new());
    }
    let entries: Vec<Value> = args
        .metrics
        .iter()
        .map(|m| {
            let id: MetricId = m.parse().map_err(|e| usage(format!("--metrics: {e}")))?;
            Ok(json!({ "metric": id, "weight": "auto" }))
        })
        .collect::<Result<_>>()?;
    let spec = json!({ "entries": entries, "alpha": args.alpha });
    let mut out = vec![format!("{section}.ensemble={spec}")];
    if section == "rdo" {
        out.push("rdo.mode=\"lnrm\"".into());
    }
    Ok(out)
}

fn members(spec: Option<&lnrm_core::metrics::MetricEnsembleSpec>) -> Result<Vec<SharedMetric>> {
    match spec {
        Some(s) => Ok(s.instantiate(&MetricRegistry::with_builtins())?),
        None => Ok(Vec::new()),
    }
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg
        .output
        .clone()
        .ok_or_else(|| usage("an output directory is required (-o or `output` in the config)"))?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Inputs keyed by file stem; stems must be unique.
fn stems(inputs: &[PathBuf]) -> Result<Vec<(String, &PathBuf)>> {
    if inputs.is_empty() {
        bail!(usage("no input images"));
    }
    let mut seen = BTreeSet::new();
    inputs
        .iter()
        .map(|p| {
            let stem = p
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| usage(format!("bad input name {}", p.display())))?
                .to_owned();
            if !seen.insert(stem.clone()) {
                bail!(usage(format!("two inputs share the name `{stem}`")));
            }
            Ok((stem, p))
        })
        .collect()
}

fn save_effective_config(cfg: &RunConfig, dir: &Path) -> Result<()> {
    write_atomic(
        &dir.join("run.json"),
        serde_json::to_string_pretty(cfg)?.as_bytes(),
    )?;
    Ok(())
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn encode(cfg: &RunConfig, input: &Path, output: &Path, recon: Option<&Path>) -> Result<()> {
    let x = load_image(input)?;
    let m = members(
        cfg.rdo
            .ensemble
            .as_ref()
            .filter(|_| cfg.rdo.mode == RdoMode::Lnrm),
    )?;
    let outcome = rdo_encode(&x, &cfg.rdo, &m)?;
    let bytes = outcome.bitstream.to_bytes();
    let decoded = decode(&Bitstream::from_bytes(&bytes)?)?;
    if decoded != outcome.reconstruction {
        bail!(InvariantError(
            "decoder output differs from the encoder reconstruction".into()
        ));
    }
    write_atomic(output, &bytes)?;
    if let Some(r) = recon {
        save_image(&outcome.reconstruction, r)?;
    }
    let summary = json!({
        "bits": outcome.bits(),
        "bpp": outcome.bpp(),
        "psnr_db": finite_or_null(psnr(&x, &outcome.reconstruction)?),
        "lambda": outcome.lambda,
        "base_qp": cfg.rdo.base_qp,
    });
    println!("{summary}");
    Ok(())
}

fn grad(
    input: &Path,
    metric: &str,
    output: &Path,
    smoothing: Option<SmoothingConfig>,
) -> Result<()> {
    let x = load_image(input)?;
    let id: MetricId = metric
        .parse()
        .map_err(|e| usage(format!("--metric: {e}")))?;
    let m = MetricRegistry::with_builtins().resolve(&id)?;
    let eval = match &smoothing {
        Some(s) => {
            s.validate()?;
            MetricEvaluation {
                score: smooth_score(m.as_ref(), &x, s)?,
                gradient: smooth_grad(m.as_ref(), &x, s)?,
            }
        }
        None => m.evaluate(&x)?,
    };
    eval.gradient.geometry().ensure_same(&x.geometry())?;
    save_ngf(&eval, m.name(), output)?;
    println!(
        "{}",
        json!({ "metric": m.name(), "score": eval.score, "smoothed": smoothing.is_some() })
    );
    Ok(())
}

fn run_sweep(cfg: &RunConfig) -> Result<()> {
    let dir = output_dir(cfg)?;
    let named = stems(&cfg.inputs)?;
    let m = members(
        cfg.rdo
            .ensemble
            .as_ref()
            .filter(|_| cfg.rdo.mode == RdoMode::Lnrm),
    )?;
    let eval = EvalSet {
        metrics: cfg.eval_metrics()?,
        smoothing: cfg.eval_smoothing,
    };
    save_effective_config(cfg, &dir)?;
    let curves = named
        .par_iter()
        .map(|(stem, path)| {
            let x = load_image(path)?;
            let curve = sweep(&x, &cfg.qps, &cfg.rdo, &m, &eval)
                .with_context(|| format!("sweeping {}", path.display()))?;
            let json = dir.join(format!("{stem}.curve.json"));
            curve.save(&json)?;
            log::info!("wrote {}", json.display());
            write_atomic(
                &dir.join(format!("{stem}.curve.csv")),
                curve.to_csv().as_bytes(),
            )?;
            Ok((stem.clone(), curve))
        })
        .collect::<Result<Vec<_>>>()?;
    for (stem, c) in &curves {
        for p in &c.points {
            println!("{stem} qp {} bpp {:.4} psnr {:.3}", p.qp, p.bpp, p.psnr_db);
        }
    }
    Ok(())
}

fn run_overfit(cfg: &RunConfig, save_recon: bool) -> Result<()> {
    let dir = output_dir(cfg)?;
    let named = stems(&cfg.inputs)?;
    let m = members(
        cfg.overfit
            .ensemble
            .as_ref()
            .filter(|_| cfg.overfit.objective != Objective::Sse),
    )?;
    let eval = cfg.eval_metrics()?;
    save_effective_config(cfg, &dir)?;
    let images = named
        .iter()
        .map(|(stem, p)| Ok((stem.as_str(), load_image(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, f64)> = (0..images.len())
        .flat_map(|i| cfg.lambdas.iter().map(move |&l| (i, l)))
        .collect();
    let lines = jobs
        .par_iter()
        .map(|&(i, lambda)| {
            let (stem, x) = &images[i];
            let mut ocfg = cfg.overfit.clone();
            ocfg.lambda = lambda;
            let r = train(x, &ocfg, &m, &eval).with_context(|| format!("training on {stem}"))?;
            let base = format!("{stem}.lambda-{lambda}");
            let json = dir.join(format!("{base}.json"));
            write_atomic(&json, r.to_json()?.as_bytes())?;
            log::info!("wrote {}", json.display());
            if save_recon {
                save_image(&r.reconstruction, dir.join(format!("{base}.imgf32")))?;
            }
            Ok(format!(
                "{stem} lambda {lambda} bpp {:.4} psnr {:.3}",
                r.bpp, r.psnr_db
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    for l in lines {
        println!("{l}");
    }
    Ok(())
}

fn curve_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if let Some(stem) = name.strip_suffix(".curve.json") {
            out.insert(stem.to_owned(), path.clone());
        }
    }
    Ok(out)
}

fn shared_keys(curves: &[&RdCurve]) -> Vec<String> {
    let mut keys = vec!["psnr".to_owned()];
    let mut common: Option<BTreeSet<String>> = None;
    for c in curves {
        let k: BTreeSet<String> = c.score_keys().into_iter().collect();
        common = Some(match common {
            Some(prev) => prev.intersection(&k).cloned().collect(),
            None => k,
        });
    }
    keys.extend(common.unwrap_or_default());
    keys
}

fn cell_text(c: BdCell) -> String {
    match c {
        BdCell::Percent(v) => format!("{v:.2}%"),
        BdCell::NonOverlap => "non-overlap".into(),
        BdCell::NonMonotone => "non-monotone".into(),
    }
}

fn bdrate(reference: &Path, test: &Path, metrics: &[String], report: Option<&Path>) -> Result<()> {
    if reference.is_dir() != test.is_dir() {
        bail!(usage(
            "reference and test must both be files or both be directories"
        ));
    }
    if !reference.is_dir() {
        let a = RdCurve::load(reference)?;
        let b = RdCurve::load(test)?;
        let keys = if metrics.is_empty() {
            shared_keys(&[&a, &b])
        } else {
            metrics.to_vec()
        };
        let tests = vec![("test".to_owned(), b)];
        let table = bd_table(("reference", &a), &tests, &keys)?;
        for (k, c) in keys.iter().zip(&table.rows[0].1) {
            println!("{k} {}", cell_text(*c));
        }
        if let Some(dir) = report {
            std::fs::create_dir_all(dir)?;
            let curves = vec![
                ("reference".to_owned(), a),
                tests.into_iter().next().unwrap(),
            ];
            let r = Report {
                curves: &curves,
                bd: Some(&table),
                embedding: None,
            };
            emit_report(&r, dir)?;
        }
        return Ok(());
    }
    if report.is_some() {
        bail!(usage("--report needs curve files, not directories"));
    }
    let (ra, rb) = (curve_files(reference)?, curve_files(test)?);
    let pairs: Vec<(String, RdCurve, RdCurve)> = ra
        .iter()
        .filter_map(|(stem, pa)| rb.get(stem).map(|pb| (stem, pa, pb)))
        .map(|(stem, pa, pb)| Ok((stem.clone(), RdCurve::load(pa)?, RdCurve::load(pb)?)))
        .collect::<Result<_>>()?;
    if pairs.is_empty() {
        bail!(ConfigError("no curve files with matching names".into()));
    }
    let keys = if metrics.is_empty() {
        let all: Vec<&RdCurve> = pairs.iter().flat_map(|(_, a, b)| [a, b]).collect();
        shared_keys(&all)
    } else {
        metrics.to_vec()
    };
    let mut valid: Vec<Vec<f64>> = vec![Vec::new(); keys.len()];
    for (stem, a, b) in pairs {
        let table = bd_table(("reference", &a), &[("test".to_owned(), b)], &keys)?;
        for (j, (k, c)) in keys.iter().zip(&table.rows[0].1).enumerate() {
            println!("{stem} {k} {}", cell_text(*c));
            if let BdCell::Percent(v) = c {
                valid[j].push(*v);
            }
        }
    }
    for (k, v) in keys.iter().zip(&valid) {
        if v.is_empty() {
            println!("mean {k} undefined (0 valid)");
        } else {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            println!("mean {k} {mean:.2}% ({} valid)", v.len());
        }
    }
    Ok(())
}

/// A `.csv` score table, or every point of the given curves (directories
/// contribute their `*.curve.json` files).
fn load_scores(inputs: &[PathBuf]) -> Result<ScoreTable> {
    if let [one] = inputs {
        if one.extension().is_some_and(|e| e == "csv") {
            let text = std::fs::read_to_string(one)
                .with_context(|| format!("reading {}", one.display()))?;
            return Ok(ScoreTable::from_csv(&text)?);
        }
    }
    let mut curves = Vec::new();
    for p in inputs {
        if p.is_dir() {
            for f in curve_files(p)?.values() {
                curves.push(RdCurve::load(f)?);
            }
        } else {
            curves.push(RdCurve::load(p)?);
        }
    }
    if curves.is_empty() {
        bail!(ConfigError("no curves found".into()));
    }
    let refs: Vec<&RdCurve> = curves.iter().collect();
    let keys: Vec<String> = shared_keys(&refs).into_iter().skip(1).collect();
    Ok(ScoreTable::from_curves(&curves, &keys)?)
}

fn matrix_csv(names: &[String], m: &[Vec<f64>]) -> String {
    let mut out = format!("metric,{}\n", names.join(","));
    for (name, row) in names.iter().zip(m) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{name},{}", cells.join(","));
    }
    out
}

fn mds(inputs: &[PathBuf], threshold: f64, report: Option<&Path>) -> Result<()> {
    let table = load_scores(inputs)?;
    let d = dissimilarity(&table.spearman_matrix()?);
    let mut e = mds_embed(&d)?;
    e.labels = cluster(&d, threshold)?;
    for ((name, c), l) in table.metrics.iter().zip(&e.coords).zip(&e.labels) {
        println!("{name} {:.6} {:.6} cluster {l}", c[0], c[1]);
    }
    if let Some(dir) = report {
        std::fs::create_dir_all(dir)?;
        let r = Report {
            curves: &[],
            bd: None,
            embedding: Some((&table.metrics, &e)),
        };
        emit_report(&r, dir)?;
    }
    Ok(())
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let bad = || usage(format!("--size `{s}` is not WxH"));
    let (w, h) = s.split_once('x').ok_or_else(bad)?;
    Ok((w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?))
}

#[allow(clippy::too_many_arguments)]
fn synth(
    inputs: &[PathBuf],
    dir: &Path,
    count: usize,
    size: &str,
    channels: usize,
    degradation: Degradation,
    seed: u64,
    format: ImageFormat,
) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let sources: Vec<(String, Image)> = if inputs.is_empty() {
        let (w, h) = parse_size(size)?;
        let g = Geometry::new(w, h, channels).map_err(|e| usage(e.to_string()))?;
        (0..count)
            .map(|i| (format!("{i:03}"), corpus_image(i, g)))
            .collect()
    } else {
        stems(inputs)?
            .into_iter()
            .map(|(stem, p)| Ok((stem, load_image(p)?)))
            .collect::<Result<_>>()?
    };
    for (i, (name, img)) in sources.iter().enumerate() {
        let ext = match (format, img.channels()) {
            (ImageFormat::Imgf32, _) => "imgf32",
            (ImageFormat::Pnm, 1) => "pgm",
            (ImageFormat::Pnm, 3) => "ppm",
            (ImageFormat::Pnm, c) => {
                bail!(usage(format!("{c}-channel images need --format imgf32")))
            }
        };
        let ugc = synth_ugc(img, degradation, seed.wrapping_add(i as u64))?;
        if inputs.is_empty() {
            save_image(img, dir.join(format!("{name}.clean.{ext}")))?;
        }
        let out = dir.join(format!("{name}.ugc.{ext}"));
        save_image(&ugc, &out)?;
        println!("{}", out.display());
    }
    Ok(())
}

fn selftest(as_json: bool) -> Result<()> {
    let checks = lnrm_core::selftest::run();
    if as_json {
        println!("{}", serde_json::to_string_pretty(&checks)?);
    } else {
        for c in &checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            println!("[{tag}] {}: {}", c.name, c.detail);
        }
    }
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name)
        .collect();
    if !failed.is_empty() {
        bail!(InvariantError(format!(
            "failing checks: {}",
            failed.join(", ")
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        assert_eq!(exit_code(&usage("x")), 1);
        assert_eq!(exit_code(&ConfigError("x".into()).into()), 2);
        let core: anyhow::Error = lnrm_core::Error::Truncated.into();
        assert_eq!(exit_code(&core), 2);
        let inner: anyhow::Error = InvariantError("x".into()).into();
        assert_eq!(exit_code(&inner.context("while encoding")), 3);
    }
}
