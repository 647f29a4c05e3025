use std::path::Path;
use std::process::{Command, Output};

fn rbmts(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbmts")).args(args).output().expect("binary runs")
}

fn rbmts_with_workers(args: &[&str], workers: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbmts")).args(args).env("RBMTS_WORKERS", workers).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name} in {header:?}"));
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

#[test]
fn stability_prints_closed_form() {
    let o = rbmts(&["stability", "--c", "0.3", "--p-star", "2", "--beta-star", "1", "--beta", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let lambda: f64 = column(&out, "lambda_max")[0].parse().unwrap();
    let alpha: f64 = column(&out, "alpha_crit")[0].parse().unwrap();
    // P* = 2: λ = 1 + c + d + cd with d = tanh(c)
    let d = 0.3f64.tanh();
    assert!((lambda - (1.0 + 0.3 + d + 0.3 * d)).abs() < 1e-10);
    assert!((alpha * lambda - 1.0).abs() < 1e-10);
}

#[test]
fn out_of_range_parameter_is_a_config_error() {
    let o = rbmts(&["stability", "--c", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
    let o = rbmts(&["solve", "--init", "sideways"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[stability]\nc = 0.3\nwobble = 2\n").unwrap();
    let o = rbmts(&["--config", cfg.to_str().unwrap(), "stability"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[reduced]\nalpha = 2.0\nbeta = 1.2\nnishimori = true\n").unwrap();
    let from_file = stdout(&rbmts(&["--config", cfg.to_str().unwrap(), "reduced"]));
    let flagged = stdout(&rbmts(&["--config", cfg.to_str().unwrap(), "reduced", "--alpha", "0.3"]));
    assert_eq!(column(&from_file, "alpha"), ["2"]);
    assert_eq!(column(&flagged, "alpha"), ["0.3"]);
    let m: f64 = column(&flagged, "m")[0].parse().unwrap();
    assert!(m < 1e-4, "below the critical load m = {m}");
}

#[test]
fn diverged_grid_point_exits_with_two() {
    let o = rbmts(&[
        "sweep",
        "--grid",
        "alpha=3:3:1",
        "--student-prior",
        "gaussian",
        "--beta",
        "4",
        "--p",
        "2",
        "--p-star",
        "2",
        "--dt-order",
        "1",
        "--n-gaussian-samples",
        "100",
        "--max-iters",
        "50",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(column(&stdout(&o), "status"), ["diverged"]);
}

#[test]
fn failed_validation_exits_with_three() {
    let o = rbmts(&["validate", "--mutate", "flip-d"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL [stability]"));
}

#[test]
fn sweep_does_not_depend_on_worker_count() {
    let args = [
        "sweep",
        "--grid",
        "alpha=0.5:2.5:3,T=0.7:0.9:2",
        "--nishimori",
        "--p",
        "1",
        "--p-star",
        "1",
        "--n-gaussian-samples",
        "200",
        "--max-iters",
        "60",
        "--seed",
        "11",
    ];
    let one = rbmts_with_workers(&args, "1");
    let many = rbmts_with_workers(&args, "8");
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(stdout(&one), stdout(&many));
    assert_eq!(stdout(&one).lines().count(), 7);
}

#[test]
fn out_dir_gets_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = rbmts(&["--out", out.to_str().unwrap(), "reduced", "--alpha", "1.5", "--system", "spurious"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(Path::new(&out).join("reduced.csv")).unwrap();
    assert_eq!(column(&csv, "system"), ["spurious"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("reduced.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "reduced");
    assert!(manifest["version"].is_string());
}
