use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use compnet::bench::{read_runs, AnalysisSummary, ExperimentReport};
use compnet::{ManifoldParams, Mode};

fn compnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_compnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = compnet(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_points(path: &Path) -> Vec<(f64, f64)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y"));
    lines
        .map(|l| {
            let (x, y) = l.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect()
}

fn interp(pts: &[(f64, f64)], x: f64) -> f64 {
    let k = pts.partition_point(|p| p.0 < x).clamp(1, pts.len() - 1);
    let ((x0, y0), (x1, y1)) = (pts[k - 1], pts[k]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

fn write_params(dir: &Path, depth: usize) -> String {
    let p = ManifoldParams::on_manifold(vec![0.5; depth], Mode::Subtract).unwrap();
    let path = dir.join("params.json");
    fs::write(&path, serde_json::to_string(&p).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn synth_of_square_params_interpolates_the_square() {
    let dir = tempfile::tempdir().unwrap();
    let params = write_params(dir.path(), 5);
    let out = dir.path().join("synth");
    ok(&["synth", "--params", &params, "--out", out.to_str().unwrap()]);
    assert!(out.join("model.json").exists());
    let pts = read_points(&out.join("breakpoints.csv"));
    assert_eq!(pts.len(), 33);
    for k in 0..=32 {
        let x = k as f64 / 32.0;
        assert!((interp(&pts, x) - x * x).abs() <= 1e-12, "x = {x}");
    }
}

#[test]
fn oracle_deviation_from_square_is_a_power_of_four() {
    let dir = tempfile::tempdir().unwrap();
    let params = write_params(dir.path(), 8);
    let csv = dir.path().join("oracle.csv");
    ok(&[
        "oracle",
        "--params",
        &params,
        "--out",
        csv.to_str().unwrap(),
    ]);
    let pts = read_points(&csv);
    assert_eq!(pts.len(), 257);
    let sup = (0..=4096)
        .map(|k| k as f64 / 4096.0)
        .map(|x| (interp(&pts, x) - x * x).abs())
        .fold(0.0f64, f64::max);
    let want = 4f64.powi(-9);
    assert!((sup - want).abs() <= 1e-12, "sup {sup:e} vs {want:e}");
}

#[test]
fn analyze_reports_full_segment_count() {
    let dir = tempfile::tempdir().unwrap();
    let params = write_params(dir.path(), 5);
    let synth = dir.path().join("synth");
    ok(&[
        "synth",
        "--params",
        &params,
        "--out",
        synth.to_str().unwrap(),
    ]);
    let out = dir.path().join("analysis");
    let model = synth.join("model.json");
    ok(&[
        "analyze",
        "--model",
        model.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let summary: AnalysisSummary =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.segments, 32);
    assert_eq!(summary.dead_layers, vec![false; 5]);
    for l in 0..5 {
        let csv = fs::read_to_string(out.join(format!("layer_{l}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 1002);
    }
}

#[test]
fn train_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.json");
    fs::write(&cfg, r#"{"epochs_stage1": 30, "epochs_stage2": 30}"#).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "train",
            "--regime",
            "manifold_enforced",
            "--target",
            "cube",
            "--seed",
            "7",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        (
            fs::read(out.join("run.json")).unwrap(),
            fs::read(out.join("model.json")).unwrap(),
        )
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    assert!(dir.path().join("a/params.json").exists());
}

#[test]
fn bench_report_agrees_with_its_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.json");
    fs::write(
        &cfg,
        r#"{"regimes": ["default", "manifold_enforced"], "targets": ["cube", "tanh3x"],
            "seeds": [0, 1, 2], "train": {"epochs_stage1": 20, "epochs_stage2": 20}}"#,
    )
    .unwrap();
    let out = dir.path().join("bench");
    ok(&[
        "bench",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    let report: ExperimentReport =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let runs = read_runs(&out.join("runs.jsonl")).unwrap();
    assert_eq!(runs.len(), 12);
    assert_eq!(report.meta.runs, 12);
    assert_eq!(report.cells.len(), 4);
    for cell in &report.cells {
        let mses: Vec<f64> = runs
            .iter()
            .filter(|r| r.regime == cell.regime && r.target == cell.target)
            .map(|r| r.reported_mse())
            .collect();
        assert_eq!(mses.len(), 3);
        let min = mses.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = mses.iter().sum::<f64>() / 3.0;
        assert_eq!(cell.min_mse, min);
        assert!((cell.mean_mse - mean).abs() <= 1e-15 * mean);
    }
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn verify_ratio_succeeds() {
    let out = ok(&["verify", "--suite", "ratio"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}

#[test]
fn bad_input_exits_with_two() {
    assert_eq!(
        compnet(&["verify", "--suite", "nonsense"]).status.code(),
        Some(2)
    );
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = dir.path().join("o");
    let code = compnet(&[
        "synth",
        "--params",
        missing.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
    .status
    .code();
    assert_eq!(code, Some(2));
    let garbage = dir.path().join("garbage.json");
    fs::write(
        &garbage,
        "{\"peaks\": [2.0], \"scales\": [0.1], \"mode\": \"add\"}",
    )
    .unwrap();
    let code = compnet(&[
        "oracle",
        "--params",
        garbage.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
    .status
    .code();
    assert_eq!(code, Some(2));
}
