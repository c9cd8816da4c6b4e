#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;

use lnrm_core::analysis::{
    bd_rate, bd_table, cluster, dissimilarity, emit_report, mds_embed, procrustes_residual,
    spearman, BdCell, Report, ScoreTable,
};
use lnrm_core::rdo::{RdCurve, RdPoint};
use lnrm_core::rng::Stream;
use lnrm_core::Error;
use proptest::prelude::*;

fn planar(points: &[[f64; 2]]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|a| {
            points
                .iter()
                .map(|b| (a[0] - b[0]).hypot(a[1] - b[1]))
                .collect()
        })
        .collect()
}

#[test]
fn random_planar_points_are_recovered() {
    for seed in 0..20 {
        let mut s = Stream::new(seed, 3);
        let pts: Vec<[f64; 2]> = (0..6).map(|_| [s.normal(), s.normal()]).collect();
        let e = mds_embed(&planar(&pts)).unwrap();
        let r = procrustes_residual(&e.coords, &pts).unwrap();
        assert!(r < 1e-8, "seed {seed}: residual {r}");
        assert!(e.eigenvalues[..2].iter().all(|&l| l >= -1e-9));
    }
}

fn blobs() -> (Vec<Vec<f64>>, Vec<usize>) {
    let truth = vec![0, 0, 0, 1, 1, 2, 2, 2, 2];
    let mut s = Stream::new(5, 5);
    let n = truth.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = if truth[i] == truth[j] {
                0.1 * s.uniform()
            } else {
                0.9 + 0.05 * s.uniform()
            };
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    (d, truth)
}

#[test]
fn three_blobs_give_three_clusters() {
    let (d, truth) = blobs();
    assert_eq!(cluster(&d, 0.5).unwrap(), truth);
    let e = mds_embed(&d).unwrap();
    let labels = cluster(&e.distances(), 0.5).unwrap();
    assert_eq!(labels.iter().max(), Some(&2));
}

#[test]
fn score_table_correlations() {
    let rows: Vec<Vec<f64>> = (0..8)
        .map(|i| {
            let t = i as f64;
            vec![t, t * t, -t, (t - 3.5).abs()]
        })
        .collect();
    let names = ["a", "b", "c", "d"].map(String::from).to_vec();
    let table = ScoreTable::new(names, rows).unwrap();
    let rho = table.spearman_matrix().unwrap();
    assert_eq!(rho[0][1], 1.0);
    assert_eq!(rho[0][2], -1.0);
    let d = dissimilarity(&rho);
    assert_eq!(d[0][2], 0.0);
    assert_eq!(cluster(&d, 0.05).unwrap(), vec![0, 0, 0, 1]);
}

#[test]
fn swapped_bd_rate_relation() {
    let a = vec![
        (0.1, 30.0),
        (0.2, 33.1),
        (0.45, 36.0),
        (0.9, 39.2),
        (1.6, 41.5),
    ];
    let b: Vec<(f64, f64)> = a
        .iter()
        .enumerate()
        .map(|(i, &(r, q))| (r * (0.8 + 0.05 * i as f64), q + 0.1))
        .collect();
    let r = bd_rate(&a, &b).unwrap() / 100.0;
    let back = bd_rate(&b, &a).unwrap() / 100.0;
    assert!((back + r / (1.0 + r)).abs() < 1e-6, "{r} {back}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spearman_ignores_monotone_transforms(
        a in prop::collection::vec(-10.0f64..10.0, 3..30),
        seed in any::<u64>(),
    ) {
        let mut s = Stream::new(seed, 0);
        let b: Vec<f64> = a.iter().map(|_| s.normal()).collect();
        prop_assume!(a.iter().any(|&v| v != a[0]));
        let base = spearman(&a, &b).unwrap();
        let ta: Vec<f64> = a.iter().map(|v| v.powi(3) + 2.0 * v).collect();
        let tb: Vec<f64> = b.iter().map(|v| (-v).exp()).collect();
        prop_assert!((spearman(&ta, &b).unwrap() - base).abs() < 1e-12);
        prop_assert!((spearman(&a, &tb).unwrap() + base).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&base));
    }

    #[test]
    fn dissimilarity_is_a_semi_metric(n in 2usize..8, seed in any::<u64>()) {
        let mut s = Stream::new(seed, 1);
        let mut rho = vec![vec![1.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let v = 2.0 * s.uniform() - 1.0;
                rho[i][j] = v;
                rho[j][i] = v;
            }
        }
        let d = dissimilarity(&rho);
        for i in 0..n {
            prop_assert_eq!(d[i][i], 0.0);
            for j in 0..n {
                prop_assert_eq!(d[i][j], d[j][i]);
                prop_assert!((0.0..=1.0).contains(&d[i][j]));
            }
        }
    }

    #[test]
    fn bd_rate_self_zero_and_order_free(
        seed in any::<u64>(),
        n in 4usize..8,
    ) {
        let mut s = Stream::new(seed, 2);
        let mut rate = 0.05;
        let mut q = 28.0;
        let curve: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                rate *= 1.3 + s.uniform();
                q += 0.5 + 3.0 * s.uniform();
                (rate, q)
            })
            .collect();
        prop_assert_eq!(bd_rate(&curve, &curve).unwrap(), 0.0);
        let other: Vec<(f64, f64)> = curve.iter().map(|&(r, q)| (r * (0.9 + 0.2 * s.uniform()), q)).collect();
        let mut shuffled = other.clone();
        shuffled.reverse();
        shuffled.rotate_left(seed as usize % n);
        prop_assert_eq!(bd_rate(&curve, &other).unwrap(), bd_rate(&curve, &shuffled).unwrap());
    }

    #[test]
    fn mds_reproduces_planar_distances(n in 2usize..9, seed in any::<u64>()) {
        let mut s = Stream::new(seed, 4);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [3.0 * s.normal(), s.normal()]).collect();
        let e = mds_embed(&planar(&pts)).unwrap();
        prop_assert!(procrustes_residual(&e.coords, &pts).unwrap() < 1e-8);
    }
}

fn curve(scale: f64, shift: f64) -> RdCurve {
    let points = [25, 28, 31, 34, 37]
        .iter()
        .enumerate()
        .map(|(i, &qp)| {
            let k = 4 - i;
            RdPoint {
                qp,
                bpp: scale * 0.1 * 1.6f64.powi(k as i32),
                psnr_db: 30.0 + 2.5 * k as f64 + shift,
                scores: BTreeMap::from([
                    ("tv-charbonnier".to_owned(), 0.05 + 0.01 * k as f64),
                    ("sharpness".to_owned(), -0.001 * (k as f64 + 1.0) * scale),
                ]),
                ms: 1.0,
            }
        })
        .collect();
    RdCurve { points }
}

#[test]
fn report_files_are_complete_and_deterministic() {
    let curves = vec![
        ("sse".to_owned(), curve(1.0, 0.0)),
        ("lnrm".to_owned(), curve(0.9, 0.0)),
    ];
    let metrics = vec![
        "psnr".to_owned(),
        "tv-charbonnier".to_owned(),
        "sharpness".to_owned(),
    ];
    let table = bd_table(("sse", &curves[0].1), &curves, &metrics).unwrap();
    assert_eq!(table.get("sse", "psnr"), Some(BdCell::Percent(0.0)));
    match table.get("lnrm", "tv-charbonnier") {
        Some(BdCell::Percent(v)) => assert!((v + 10.0).abs() < 1e-9, "{v}"),
        other => panic!("{other:?}"),
    }
    let (d, _) = blobs();
    let mut e = mds_embed(&d).unwrap();
    e.labels = cluster(&d, 0.5).unwrap();
    let names: Vec<String> = (0..d.len()).map(|i| format!("m{i}")).collect();
    let report = Report {
        curves: &curves,
        bd: Some(&table),
        embedding: Some((&names, &e)),
    };
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&report, dir.path()).unwrap();
    let read = |name: &str| std::fs::read_to_string(dir.path().join(name)).unwrap();

    let svg = read("rd_psnr.svg");
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(
        read("rd_tv-charbonnier.svg").matches("<polyline").count(),
        2
    );
    assert_eq!(
        read("bdrate.csv").lines().count() - 1,
        curves.len() * metrics.len()
    );
    assert_eq!(read("rd_points.csv").lines().count() - 1, 10);
    let summary: serde_json::Value = serde_json::from_str(&read("summary.json")).unwrap();
    assert_eq!(summary["sse"]["psnr"], 0.0);
    let meta: serde_json::Value = serde_json::from_str(&read("metadata.json")).unwrap();
    assert_eq!(meta["bd_fit"], "cubic");
    assert_eq!(read("mds.csv").lines().count(), d.len() + 1);

    let first: Vec<Vec<u8>> = files.iter().map(|p| std::fs::read(p).unwrap()).collect();
    let again = emit_report(&report, dir.path()).unwrap();
    assert_eq!(files, again);
    let second: Vec<Vec<u8>> = again.iter().map(|p| std::fs::read(p).unwrap()).collect();
    assert_eq!(first, second);
}

#[test]
fn invalid_pairs_become_marked_cells() {
    let a = curve(1.0, 0.0);
    let far = curve(1.0, 100.0);
    let mut wobbly = curve(1.0, 0.0);
    wobbly.points[2].psnr_db = 50.0;
    let tests = vec![("far".to_owned(), far), ("wobbly".to_owned(), wobbly)];
    let t = bd_table(("sse", &a), &tests, &["psnr".to_owned()]).unwrap();
    assert_eq!(t.get("far", "psnr"), Some(BdCell::NonOverlap));
    assert_eq!(t.get("wobbly", "psnr"), Some(BdCell::NonMonotone));
    assert!(t.to_csv().contains("far,psnr,non-overlap"));
    let missing = bd_table(("sse", &a), &tests, &["nope".to_owned()]);
    assert!(matches!(missing, Err(Error::UnknownMetric(_))));
}

#[test]
fn score_csv_round_trip() {
    let text = "id,qualiclip, topiq_nr,clipiqa\nimg0,0.5,1,2\nimg1,0.25,-3,4.5\nimg1,0.25,-3,4.5\n";
    let t = ScoreTable::from_csv(text).unwrap();
    assert_eq!(t.metrics, ["qualiclip", "topiq_nr", "clipiqa"]);
    assert_eq!(t.rows.len(), 3);
    assert_eq!(t.rows[1], t.rows[2]);
    assert_eq!(ScoreTable::from_csv(&t.to_csv()).unwrap(), t);
    assert!(ScoreTable::from_csv("id,a\nx,nan\n").is_err());
    assert!(ScoreTable::from_csv("id,a,b\nx,1\n").is_err());
    assert!(ScoreTable::from_csv("id\nx\n").is_err());
}
