//! End-to-end checks of the `rashomon` binary: exit codes and a tiny
//! gen-data / train / metrics / report pipeline.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rashomon_cli::mtx::write_matrix;
use rashomon_core::Matrix;

fn rashomon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rashomon"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const TINY_CONFIG: &str = r#"
[dataset]
kind = "synthetic"
classes = 2
train-samples = 120
test-samples = 60
image-size = 10
noise = 0.8
seed = 21

[training]
batch-size = 20
learning-rate = 0.002
seeds = [1, 2]
max-epochs = 3

[stopping]
mode = "pseudo-max"

[sweep]
regime = "learning-rate"
values = [0.002, 0.0005]

[ood]
transforms = ["x-flip"]
seed = 5
"#;

#[test]
fn usage_errors_exit_1() {
    let out = rashomon(&["definitely-not-a-command"]);
    assert_eq!(out.status.code(), Some(1));
    let out = rashomon(&["sweep", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_0() {
    let out = rashomon(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("sweep"));
}

#[test]
fn data_errors_exit_2() {
    let out = rashomon(&["svcca", "/no/such/a.mtx1", "/no/such/b.mtx1"]);
    assert_eq!(out.status.code(), Some(2));

    // A malformed matrix file is a format error, also 2.
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mtx1");
    fs::write(&bad, b"not a matrix").unwrap();
    let good = dir.path().join("good.mtx1");
    write_matrix(
        &Matrix::new(2, 50, (0..100).map(|i| (i as f64).sin()).collect()).unwrap(),
        &good,
    )
    .unwrap();
    let out = rashomon(&["svcca", bad.to_str().unwrap(), good.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn svcca_command_reports_identity() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.mtx1");
    let m = Matrix::new(3, 80, (0..240).map(|i| (i as f64 * 0.61).cos()).collect()).unwrap();
    write_matrix(&m, &a).unwrap();
    let out = rashomon(&["svcca", a.to_str().unwrap(), a.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    let sim_line = text
        .lines()
        .find(|l| l.starts_with("similarity"))
        .expect("similarity line");
    let value: f64 = sim_line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((value - 1.0).abs() < 1e-8, "{text}");
}

#[test]
fn gen_data_writes_idx_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, TINY_CONFIG).unwrap();
    let out_dir = dir.path().join("data");
    let out = rashomon(&[
        "gen-data",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in [
        "train-images.idx",
        "train-labels.idx",
        "test-images.idx",
        "test-labels.idx",
    ] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    // The emitted pair loads back as a dataset of the configured size.
    let ds = rashomon_cli::idx::load_idx(
        &out_dir.join("train-images.idx"),
        &out_dir.join("train-labels.idx"),
        rashomon_core::data::Split::Train,
    )
    .unwrap();
    assert_eq!(ds.samples, 120);
    assert_eq!(ds.classes, 2);
}

fn run_tiny_pipeline(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("exp.toml");
    fs::write(&cfg, TINY_CONFIG).unwrap();
    let run_dir = dir.join("run");
    let out = rashomon(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    run_dir
}

#[test]
fn pipeline_sweep_metrics_report() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = run_tiny_pipeline(dir.path());
    assert!(run_dir.join("run.json").exists());
    assert!(run_dir.join("lr-0.002/seed-1/predictions.mtx1").exists());
    assert!(run_dir.join("lr-0.002/seed-2/tap-fc1.mtx1").exists());
    assert!(run_dir.join("lr-0.0005/seed-1/ood-x-flip.mtx1").exists());

    let pm = rashomon(&["pm", "--run", run_dir.to_str().unwrap()]);
    assert_eq!(
        pm.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&pm.stderr)
    );
    assert_eq!(stdout(&pm).lines().count(), 2);

    let rm = rashomon(&["rm", "--run", run_dir.to_str().unwrap(), "--tap", "cnn"]);
    assert_eq!(
        rm.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&rm.stderr)
    );
    assert!(stdout(&rm).contains("svcca"));

    let confab = rashomon(&[
        "confab",
        "--run",
        run_dir.to_str().unwrap(),
        "--top",
        "4",
        "--pool",
        "per-strategy",
    ]);
    assert_eq!(confab.status.code(), Some(0));
    assert_eq!(
        stdout(&confab)
            .lines()
            .filter(|l| l.starts_with("group"))
            .count(),
        2
    );

    let hyp1 = rashomon(&[
        "hyp1",
        "--run",
        run_dir.to_str().unwrap(),
        "--subset-size",
        "15",
    ]);
    assert_eq!(
        hyp1.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&hyp1.stderr)
    );
    assert!(stdout(&hyp1).starts_with("verdict"));

    let rep_dir = dir.path().join("rep");
    let rep = rashomon(&[
        "report",
        "--run",
        run_dir.to_str().unwrap(),
        "--out",
        rep_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        rep.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&rep.stderr)
    );
    let csv = fs::read_to_string(rep_dir.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3); // header + 2 strategies
    assert!(csv.starts_with("strategy,regime,value,variants,"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(rep_dir.join("summary.json")).unwrap()).unwrap();
    let mut keys: Vec<&str> = summary
        .as_object()
        .unwrap()
        .keys()
        .map(|k| k.as_str())
        .collect();
    keys.sort_unstable();
    assert_eq!(
        keys,
        ["confabulation", "hyp1", "pcc", "strategies", "svcca"],
        "summary.json field set must match the documented schema"
    );
    assert_eq!(summary["strategies"].as_array().unwrap().len(), 2);

    // Metric commands on one strategy only.
    let one = rashomon(&[
        "pm",
        "--run",
        run_dir.to_str().unwrap(),
        "--strategy",
        "lr-0.002",
        "--set",
        "x-flip",
    ]);
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(stdout(&one).lines().count(), 1);

    // Unknown strategy label is a usage error.
    let bad = rashomon(&[
        "pm",
        "--run",
        run_dir.to_str().unwrap(),
        "--strategy",
        "lr-9",
    ]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn unreachable_band_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    let config = TINY_CONFIG.replace(
        "mode = \"pseudo-max\"",
        "mode = \"risk-band\"\ntarget = 0.999\nepsilon = 0.0004",
    );
    fs::write(&cfg, config).unwrap();
    let out = rashomon(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--strategy",
        "lr-0.002",
        "--out",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn train_single_strategy_writes_run_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, TINY_CONFIG).unwrap();
    let run_dir = dir.path().join("run");
    let out = rashomon(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--strategy",
        "lr-0.0005",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(run_dir.join("lr-0.0005/strategy.json").exists());

    // Without --strategy and more than one configured, it's a usage error.
    let out = rashomon(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
