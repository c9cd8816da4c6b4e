use std::path::Path;
use std::process::{Command, Output};

use lnrm_core::metrics::load_ngf;
use lnrm_core::rdo::RdCurve;
use serde_json::Value;

fn lnrm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lnrm"))
        .args(args)
        .current_dir(dir)
        .env("NO_COLOR", "1")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = lnrm(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn corpus(dir: &Path) {
    ok(
        dir,
        &["synth-ugc", "-o", "c", "--count", "2", "--size", "40x24"],
    );
}

#[test]
fn encode_decode_round_trip() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    corpus(d);
    let summary: Value = serde_json::from_str(&ok(
        d,
        &[
            "encode",
            "c/000.ugc.pgm",
            "-o",
            "a.bin",
            "--recon",
            "r.imgf32",
        ],
    ))
    .unwrap();
    let bits = summary["bits"].as_u64().unwrap();
    assert_eq!(
        std::fs::metadata(d.join("a.bin")).unwrap().len(),
        bits.div_ceil(8)
    );
    ok(d, &["decode", "a.bin", "-o", "out.imgf32"]);
    let recon = lnrm_core::io::load_image(d.join("r.imgf32")).unwrap();
    let decoded = lnrm_core::io::load_image(d.join("out.imgf32")).unwrap();
    assert_eq!(lnrm_core::psnr(&recon, &decoded).unwrap(), f64::INFINITY);
}

type Point = (i32, f64, f64, Vec<(String, f64)>);

fn points(path: &Path) -> Vec<Point> {
    RdCurve::load(path)
        .unwrap()
        .points
        .into_iter()
        .map(|p| (p.qp, p.bpp, p.psnr_db, p.scores.into_iter().collect()))
        .collect()
}

#[test]
fn zero_alpha_sweep_matches_sse_and_bdrate_is_zero() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    corpus(d);
    ok(d, &["sweep", "c/000.ugc.pgm", "c/001.ugc.pgm", "-o", "sse"]);
    ok(
        d,
        &[
            "--jobs",
            "1",
            "sweep",
            "c/000.ugc.pgm",
            "c/001.ugc.pgm",
            "-o",
            "lnrm",
            "--metrics",
            "tv-charbonnier",
            "--alpha",
            "0",
        ],
    );
    for stem in ["000.ugc", "001.ugc"] {
        let name = format!("{stem}.curve.json");
        let a = points(&d.join("sse").join(&name));
        assert_eq!(a.len(), 5);
        assert_eq!(a, points(&d.join("lnrm").join(&name)));
    }
    let same = ok(
        d,
        &[
            "bdrate",
            "sse/000.ugc.curve.json",
            "sse/000.ugc.curve.json",
            "--metric",
            "psnr",
        ],
    );
    assert_eq!(same.trim(), "psnr 0.00%");
    let dirs = ok(d, &["bdrate", "sse", "lnrm", "--metric", "psnr"]);
    assert!(dirs.contains("mean psnr 0.00% (2 valid)"), "{dirs}");
    let run: Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("lnrm/run.json")).unwrap()).unwrap();
    assert_eq!(run["rdo"]["mode"], "lnrm");
    assert_eq!(run["qps"], serde_json::json!([25, 28, 31, 34, 37]));
}

#[test]
fn effective_config_round_trips() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let first = ok(
        d,
        &[
            "overfit",
            "--set",
            "overfit.iterations=50",
            "--set",
            "overfit.warmup=5",
            "--set",
            "lambdas=[0.001]",
            "--print-effective-config",
        ],
    );
    let v: Value = serde_json::from_str(&first).unwrap();
    assert_eq!(v["overfit"]["iterations"], 50);
    assert_eq!(v["lambdas"], serde_json::json!([0.001]));
    std::fs::write(d.join("cfg.json"), &first).unwrap();
    let second = ok(
        d,
        &[
            "overfit",
            "--config",
            "cfg.json",
            "--print-effective-config",
        ],
    );
    assert_eq!(first, second);
}

#[test]
fn overfit_writes_results() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    corpus(d);
    let out = ok(
        d,
        &[
            "overfit",
            "c/000.clean.pgm",
            "-o",
            "o",
            "--objective",
            "lnrm",
            "--metrics",
            "sharpness",
            "--set",
            "overfit.iterations=60",
            "--set",
            "overfit.warmup=10",
            "--set",
            "lambdas=[0.004,0.001]",
            "--save-recon",
        ],
    );
    assert_eq!(out.lines().count(), 2);
    let r: Value = serde_json::from_str(
        &std::fs::read_to_string(d.join("o/000.clean.lambda-0.001.json")).unwrap(),
    )
    .unwrap();
    for key in ["bpp", "psnr_db", "scores", "ms_warmup", "ms_main"] {
        assert!(!r[key].is_null(), "{key}");
    }
    assert_eq!(r["counters"]["score_evals"], 1);
    assert_eq!(r["counters"]["grad_evals"], 1);
    assert!(d.join("o/000.clean.lambda-0.004.imgf32").exists());
}

#[test]
fn gradients_are_written_as_ngf() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    corpus(d);
    let out: Value = serde_json::from_str(&ok(
        d,
        &[
            "grad",
            "c/001.clean.pgm",
            "--metric",
            "tv-charbonnier",
            "-o",
            "g.ngf",
        ],
    ))
    .unwrap();
    let (eval, name) = load_ngf(d.join("g.ngf"), None).unwrap();
    assert_eq!(name, "tv-charbonnier");
    assert_eq!(eval.score, out["score"].as_f64().unwrap());
    assert_eq!(
        (
            eval.gradient.geometry().width,
            eval.gradient.geometry().height
        ),
        (40, 24)
    );

    ok(
        d,
        &[
            "smooth-grad",
            "c/001.clean.pgm",
            "--metric",
            "sharpness",
            "-o",
            "s1.ngf",
            "--seed",
            "3",
        ],
    );
    ok(
        d,
        &[
            "smooth-grad",
            "c/001.clean.pgm",
            "--metric",
            "sharpness",
            "-o",
            "s2.ngf",
            "--seed",
            "3",
        ],
    );
    assert_eq!(
        std::fs::read(d.join("s1.ngf")).unwrap(),
        std::fs::read(d.join("s2.ngf")).unwrap()
    );

    // An external gradient can drive an encode.
    ok(
        d,
        &[
            "encode",
            "c/001.clean.pgm",
            "-o",
            "e.bin",
            "--metrics",
            "external:g.ngf",
        ],
    );
}

#[test]
fn correlation_and_mds_from_a_score_csv() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let mut csv = String::from("id,a,b,c,e\n");
    for i in 0..8 {
        let x = i as f64;
        csv += &format!("im{i},{x},{},{},{}\n", 2.0 * x + 1.0, -x, (x - 3.5).powi(2));
    }
    std::fs::write(d.join("s.csv"), csv).unwrap();
    let rho = ok(d, &["corr", "s.csv"]);
    assert!(rho.starts_with("metric,a,b,c,e\na,1,1,-1,"), "{rho}");
    let m = ok(d, &["mds", "s.csv", "--threshold", "0.05", "--report", "r"]);
    let labels: Vec<&str> = m.lines().map(|l| l.rsplit(' ').next().unwrap()).collect();
    assert_eq!(labels, ["0", "0", "0", "1"]);
    assert!(d.join("r/mds.csv").exists());
}

#[test]
fn corpus_generation_is_seeded() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    ok(
        d,
        &[
            "synth-ugc",
            "-o",
            "a",
            "--count",
            "1",
            "--degradation",
            "both",
            "--seed",
            "9",
        ],
    );
    ok(
        d,
        &[
            "synth-ugc",
            "-o",
            "b",
            "--count",
            "1",
            "--degradation",
            "both",
            "--seed",
            "9",
        ],
    );
    ok(
        d,
        &[
            "synth-ugc",
            "-o",
            "c",
            "--count",
            "1",
            "--degradation",
            "both",
            "--seed",
            "10",
        ],
    );
    let read = |p: &str| std::fs::read(d.join(p)).unwrap();
    assert_eq!(read("a/000.ugc.pgm"), read("b/000.ugc.pgm"));
    assert_ne!(read("a/000.ugc.pgm"), read("c/000.ugc.pgm"));
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let code = |args: &[&str]| lnrm(d, args).status.code().unwrap();
    assert_eq!(code(&["selftest"]), 0);
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["encode"]), 1);
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["sweep", "x.pgm"]), 1);
    assert_eq!(code(&["synth-ugc", "-o", "z", "--size", "big"]), 1);
    assert_eq!(code(&["decode", "missing.bin", "-o", "x.pgm"]), 2);
    assert_eq!(
        code(&["sweep", "--set", "bogus=1", "--print-effective-config"]),
        2
    );
    assert_eq!(
        code(&["sweep", "--set", "qps=[30,25]", "--print-effective-config"]),
        2
    );
    std::fs::write(d.join("junk.bin"), b"LNRC").unwrap();
    assert_eq!(code(&["decode", "junk.bin", "-o", "x.pgm"]), 2);
}
