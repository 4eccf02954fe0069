use std::path::Path;
use std::process::{Command, Output};

use termdp::envs::{build_nonconvex_toy, instance_to_json};

fn termdp(dir: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_termdp"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("TERMDP_")) {
        cmd.env_remove(k);
    }
    cmd.current_dir(dir).args(args).output().expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn read_csv(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn help_succeeds_and_missing_command_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(termdp(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(termdp(dir.path(), &[]).status.code(), Some(2));
    assert_eq!(termdp(dir.path(), &["solve", "--no-such-flag"]).status.code(), Some(2));
}

#[test]
fn zero_beta_points_to_value_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let out = termdp(dir.path(), &["--beta", "0", "solve", "--builtin", "toy"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("value-iteration"));
    let out = termdp(dir.path(), &["value-iteration", "--builtin", "toy"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(dir.path().join("value_iteration.json").is_file());
    assert!(dir.path().join("vi_policy.csv").is_file());
}

#[test]
fn malformed_and_inconsistent_instances_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("junk.json"), "{ not json").unwrap();
    let out = termdp(dir.path(), &["--beta", "1", "solve", "junk.json"]);
    assert_eq!(out.status.code(), Some(2));

    let mut doc: serde_json::Value = serde_json::from_str(&instance_to_json(&build_nonconvex_toy()).unwrap()).unwrap();
    doc["transition"][1][0] = serde_json::json!([0.5, 0.49]);
    std::fs::write(dir.path().join("bad.json"), doc.to_string()).unwrap();
    let out = termdp(dir.path(), &["--beta", "1", "solve", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("x=1") && err.contains("u=0"), "{err}");

    let out = termdp(dir.path(), &["--beta", "1", "solve", "missing.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oversized_evaluation_window_hits_the_resource_guard() {
    let dir = tempfile::tempdir().unwrap();
    let out =
        termdp(dir.path(), &["--beta", "10", "--degree-m", "2", "--max-iters", "2", "solve", "--builtin", "maze"]);
    assert_eq!(out.status.code(), Some(4), "{}", text(&out.stderr));
}

#[test]
fn solve_writes_report_and_policy() {
    let dir = tempfile::tempdir().unwrap();
    let out = termdp(dir.path(), &["--beta", "1", "--degree-n", "1", "--bits", "solve", "--builtin", "toy"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["converged"], serde_json::Value::Bool(true));
    let rows = read_csv(&dir.path().join("policy.csv"));
    // t=1 has one empty history, t=2 one per first control; 2 states x 2 actions each
    assert_eq!(rows.len(), 4 + 8);
    assert_eq!(&rows[0][0], "1");
    assert_eq!(&rows[0][1], "");
}

#[test]
fn environment_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_termdp"))
        .current_dir(dir.path())
        .env("TERMDP_BETA", "2")
        .args(["solve", "--builtin", "hamming"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
}

#[test]
fn hamming_sweep_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = termdp(dir.path(), &["sweep", "--builtin", "hamming", "--betas", "0.25,0.5,1,2,4"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let rows = read_csv(&dir.path().join("tradeoff.csv"));
    assert_eq!(rows.len(), 5);
    for row in rows {
        let beta: f64 = row[0].parse().unwrap();
        let j: f64 = row[1].parse().unwrap();
        let i: f64 = row[2].parse().unwrap();
        let p = 1.0 / (1.0 + (-1.0 / beta).exp());
        let entropy = -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
        assert!((j - (1.0 - p)).abs() < 1e-6, "beta {beta}: J {j}");
        assert!((i - (2f64.ln() - entropy)).abs() < 1e-6, "beta {beta}: I {i}");
    }
    assert!(dir.path().join("rate_bounds.csv").is_file());
}

#[test]
fn sweep_range_must_be_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    for bad in ["1:0.5:3", "0:1:3", "1:2", "1:2:0"] {
        let out = termdp(dir.path(), &["sweep", "--builtin", "hamming", "--beta-range", bad]);
        assert_eq!(out.status.code(), Some(2), "{bad}");
    }
}

#[test]
fn landscape_reports_two_minima() {
    let dir = tempfile::tempdir().unwrap();
    let out = termdp(dir.path(), &["landscape", "--resolution", "51"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert_eq!(text(&out.stdout).matches("minimum at").count(), 2);
    assert_eq!(read_csv(&dir.path().join("stage1.csv")).len(), 51 * 51);
    assert_eq!(read_csv(&dir.path().join("stage2.csv")).len(), 51);
}

#[test]
fn maze_writes_snapshots_and_route_masses() {
    let dir = tempfile::tempdir().unwrap();
    let out = termdp(dir.path(), &["maze", "--snapshots", "1,25"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    for name in ["report.json", "policy.csv", "snapshot_t1.csv", "snapshot_t25.csv", "routes.csv", "information.csv"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let routes = read_csv(&dir.path().join("routes.csv"));
    assert_eq!(routes.len(), 4);
    let snapshot: f64 =
        read_csv(&dir.path().join("snapshot_t25.csv")).iter().map(|r| r[3].parse::<f64>().unwrap()).sum();
    assert!((snapshot - 1.0).abs() < 1e-9);
    assert_eq!(read_csv(&dir.path().join("information.csv")).len(), 55);

    let out = termdp(dir.path(), &["maze", "--snapshots", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes_clean_suites_and_flags_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let out = termdp(dir.path(), &["verify", "--scope", "validation,reduction,monotonicity", "--trials", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stdout));

    let out = termdp(dir.path(), &["verify", "--scope", "validation", "--trials", "3", "--corrupt-transition"]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("FAIL") && stdout.contains("transition[") && stdout.contains("replay:"), "{stdout}");

    let out = termdp(dir.path(), &["verify", "--scope", "nonsense"]);
    assert_eq!(out.status.code(), Some(2));
}
