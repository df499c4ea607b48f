use std::process::Command;

use clique_bench::report::records_csv;
use clique_bench::{run_experiment, Algorithm, ExperimentConfig};

#[test]
fn star_has_one_tree() {
    let cfg = ExperimentConfig::new("star-s3", Algorithm::TreeSublinear, 10, 3);
    let exp = run_experiment(&cfg).unwrap();
    assert_eq!(exp.report.frequencies.len(), 1);
    assert_eq!(exp.report.flag_rate, 0.0);
    assert_eq!(exp.records.len(), 10);
    assert!(exp.report.tv.unwrap() < 1e-12);
}

#[test]
fn reruns_are_identical() {
    for algo in [Algorithm::TreeSublinear, Algorithm::TreeViaDoubling, Algorithm::DoublingWalk] {
        let cfg = ExperimentConfig::new("c5", algo, 20, 42);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.report.to_json(), b.report.to_json());
        assert_eq!(records_csv(&a.records).unwrap(), records_csv(&b.records).unwrap());
    }
}

#[test]
fn unknown_graph_is_a_config_error() {
    let cfg = ExperimentConfig::new("no-such-graph", Algorithm::TreeSublinear, 1, 0);
    assert!(run_experiment(&cfg).unwrap_err().is_config());
}

#[test]
fn cli_writes_outputs() {
    let dir = std::env::temp_dir().join(format!("clique-bench-cli-{}", std::process::id()));
    let status = Command::new(env!("CARGO_BIN_EXE_clique-bench"))
        .args(["--graph", "k3", "--algo", "aldous-broder-ref", "--runs", "50", "--seed", "1", "--out"])
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert!(json["frequencies"].is_object());
    let csv = std::fs::read_to_string(dir.join("runs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);
    std::fs::remove_dir_all(&dir).ok();

    let bad = Command::new(env!("CARGO_BIN_EXE_clique-bench")).args(["--graph", "nope"]).status().unwrap();
    assert_eq!(bad.code(), Some(2));
}
