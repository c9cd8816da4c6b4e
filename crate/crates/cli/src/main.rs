mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Hybrid block codec and overfitted codec driven by linearized
/// no-reference quality metrics.
#[derive(Parser, Debug)]
#[command(name = "lnrm", version)]
struct Cli {
    /// Worker threads for sweeps and overfit runs (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// More log output on standard error (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `rdo.base_qp=30` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long)]
    print_effective_config: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct EnsembleArgs {
    /// Comma-separated ensemble metrics with calibrated weights
    /// (built-in names or `external:FILE.ngf`).
    #[arg(long, value_delimiter = ',', value_name = "METRIC,...")]
    metrics: Vec<String>,
    /// Global trade-off for `--metrics`.
    #[arg(long, default_value_t = 1.0, requires = "metrics")]
    alpha: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// RDO-encode one image to a bitstream.
    Encode {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Also store the encoder's reconstruction (`.pgm`, `.ppm` or `.imgf32`).
        #[arg(long, value_name = "IMAGE")]
        recon: Option<PathBuf>,
        /// Base QP (same as `--set rdo.base_qp=N`).
        #[arg(long)]
        qp: Option<i32>,
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Decode a bitstream to an image.
    Decode {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write a metric's score and input gradient as NGF.
    Grad {
        input: PathBuf,
        #[arg(long)]
        metric: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Like `grad`, averaged over Gaussian perturbations of the input.
    SmoothGrad {
        input: PathBuf,
        #[arg(long)]
        metric: String,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = lnrm_core::smoothing::DEFAULT_SIGMA)]
        sigma: f64,
        #[arg(long, default_value_t = lnrm_core::smoothing::DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// RD sweep of every input over the configured QPs.
    Sweep {
        inputs: Vec<PathBuf>,
        #[arg(short, long, value_name = "DIR")]
        output: Option<PathBuf>,
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train the overfitted codec on every input at every configured lambda.
    Overfit {
        inputs: Vec<PathBuf>,
        #[arg(short, long, value_name = "DIR")]
        output: Option<PathBuf>,
        /// sse, nrm, s-nrm, lnrm or slnrm (same as `--set overfit.objective=...`).
        #[arg(long)]
        objective: Option<String>,
        /// Also store each reconstruction as `.imgf32`.
        #[arg(long)]
        save_recon: bool,
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// BD-rates of a test curve against a reference curve. Directories pair
    /// their `*.curve.json` files by name.
    Bdrate {
        reference: PathBuf,
        test: PathBuf,
        /// Quality keys; `psnr` plus every shared score by default.
        #[arg(long = "metric")]
        metrics: Vec<String>,
        /// Write plots and tables to this directory (file inputs only).
        #[arg(long, value_name = "DIR")]
        report: Option<PathBuf>,
    },
    /// Spearman correlation matrix between metrics.
    Corr {
        /// A score CSV, or curve files and directories.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// MDS embedding and clustering of metrics by correlation.
    Mds {
        /// A score CSV, or curve files and directories.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Single-linkage cut on 1 - |rho|.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Write mds.csv and the scatter plot here.
        #[arg(long, value_name = "DIR")]
        report: Option<PathBuf>,
    },
    /// Generate degraded images from the synthetic corpus or given inputs.
    SynthUgc {
        inputs: Vec<PathBuf>,
        #[arg(short, long, value_name = "DIR")]
        output: PathBuf,
        /// Corpus size when no inputs are given.
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value = "64x64", value_name = "WxH")]
        size: String,
        #[arg(long, default_value_t = 1)]
        channels: usize,
        #[arg(long, value_enum, default_value = "gaussian-noise")]
        degradation: commands::DegradationKind,
        #[arg(long, default_value_t = 0.02)]
        sigma: f64,
        #[arg(long, default_value_t = 30)]
        qp: i32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// pgm/ppm or imgf32.
        #[arg(long, value_enum, default_value = "pnm")]
        format: commands::ImageFormat,
    },
    /// Run the built-in invariant checks.
    Selftest {
        #[arg(long)]
        json: bool,
    },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let mut b = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level));
    if std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty()) {
        b.write_style(env_logger::WriteStyle::Never);
    }
    b.init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    init_logging(cli.verbose);
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| commands::run(cli)));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            // Core errors already embed their source in the message.
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(commands::exit_code(&e))
        }
        Err(_) => ExitCode::from(3),
    }
}
