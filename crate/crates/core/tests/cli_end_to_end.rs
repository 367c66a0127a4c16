//! Runs the `ties` binary and compares its output with committed fixtures.
//! Set `UPDATE_FIXTURES=1` to rewrite them.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn ties(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ties"))
        .args(args)
        .current_dir(manifest_dir())
        .output()
        .expect("binary runs")
}

fn check_fixture(name: &str, actual: &[u8]) {
    let path = manifest_dir().join("tests/fixtures").join(name);
    if std::env::var_os("UPDATE_FIXTURES").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read(&path).unwrap_or_else(|e| panic!("fixture {}: {e}", path.display()));
    assert!(
        expected == actual,
        "output differs from {}:\n{}",
        path.display(),
        String::from_utf8_lossy(actual)
    );
}

fn run_fixture(name: &str, args: &[&str], code: i32) {
    let mut full: Vec<&str> = args.to_vec();
    full.push("--no-meta");
    let out = ties(&full);
    assert_eq!(
        out.status.code(),
        Some(code),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    check_fixture(name, &out.stdout);
}

#[test]
fn simulate_csv() {
    run_fixture("simulate.csv", &["simulate", "--gaps", "1,1", "--trials", "20", "--seed", "3"], 0);
}

#[test]
fn estimate() {
    run_fixture("estimate.json", &["estimate", "--m", "3", "--gaps", "2,3", "--trials", "5000", "--seed", "7"], 0);
}

#[test]
fn estimate_from_config() {
    run_fixture(
        "estimate_config_out.json",
        &["estimate", "--config", "tests/fixtures/estimate_config.json"],
        0,
    );
}

#[test]
fn estimate_pair() {
    run_fixture(
        "estimate_pair.json",
        &["estimate-pair", "--gaps", "2,3,9", "--pair", "1", "--trials", "5000", "--seed", "7"],
        0,
    );
}

#[test]
fn limit_check() {
    run_fixture(
        "limit_check.json",
        &["limit-check", "--m", "4", "--pair", "1", "--fixed", "1,1", "--far", "1,5", "--trials", "2000", "--seed", "7"],
        0,
    );
}

#[test]
fn tail() {
    run_fixture(
        "tail.json",
        &["tail", "--gaps", "1,1", "--thresholds", "10,100,1000", "--hill-fraction", "0.05", "--trials", "5000", "--seed", "7"],
        0,
    );
}

#[test]
fn stopped_product() {
    run_fixture(
        "stopped_product.json",
        &["stopped-product", "--gaps", "2,3", "--n", "10,100", "--trials", "2000", "--seed", "7"],
        0,
    );
}

#[test]
fn gap_waiting() {
    run_fixture(
        "gap_waiting.json",
        &["gap-waiting", "--m", "4", "--waits", "20000", "--sums", "1,2", "--seed", "7"],
        0,
    );
}

#[test]
fn solve_exact() {
    run_fixture(
        "solve.json",
        &["solve", "--m", "3", "--radius", "8", "--policy", "zero", "--gaps", "1,1", "--exact"],
        0,
    );
}

#[test]
fn bracket() {
    run_fixture("bracket.json", &["bracket", "--m", "4", "--gaps", "1,1,1", "--radius", "8"], 0);
}

#[test]
fn second_moment() {
    run_fixture("second_moment.json", &["second-moment", "--radii", "10,20"], 0);
}

#[test]
fn verify() {
    run_fixture("verify.json", &["verify", "--suite", "all", "--m", "3", "--grid", "6", "--n-max", "3"], 0);
}

#[test]
fn series_search() {
    run_fixture("series_search.json", &["series", "search", "--k", "3", "--degree", "4", "--normalize", "1"], 0);
}

#[test]
fn series_residual_zero_and_nonzero() {
    run_fixture(
        "series_residual.json",
        &["series", "residual", "--file", "tests/fixtures/series_u1.json", "--gamma", "1/4", "--degree", "4"],
        0,
    );
    run_fixture(
        "series_residual_fail.json",
        &["series", "residual", "--file", "tests/fixtures/series_u2.json", "--gamma", "1/4", "--degree", "2"],
        1,
    );
}

#[test]
fn series_commute_check() {
    run_fixture(
        "series_commute.json",
        &["series", "commute-check", "--vars", "3", "--degree", "5", "--trials", "10", "--seed", "1"],
        0,
    );
}

#[test]
fn output_is_independent_of_worker_count() {
    let base = ["estimate", "--gaps", "1,2,3", "--trials", "3000", "--seed", "11", "--no-meta"];
    let one = ties(&[&base[..], &["--workers", "1"]].concat());
    let four = ties(&[&base[..], &["--workers", "4"]].concat());
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn summary_and_samples_go_to_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    let samples = dir.path().join("s.csv");
    let o = ties(&[
        "estimate",
        "--gaps",
        "1,1",
        "--trials",
        "100",
        "--seed",
        "2",
        "--out",
        out.to_str().unwrap(),
        "--samples",
        samples.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert!(summary["meta"]["version"].is_string());
    let csv = std::fs::read_to_string(&samples).unwrap();
    assert!(csv.starts_with("trial,T,absorbed,hit_index\n"));
    assert_eq!(csv.lines().count(), 101);
}

#[test]
fn invalid_configuration_exits_with_two() {
    let missing = ties(&["estimate", "--gaps", "1,1"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("seed"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"gaps":[1,1],"seed":1,"bogus":true}"#).unwrap();
    let unknown = ties(&["estimate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("bogus"));

    let tied = ties(&["estimate", "--gaps", "0,1", "--seed", "1"]);
    assert_eq!(tied.status.code(), Some(2));

    let flag = ties(&["estimate", "--trials", "many"]);
    assert_eq!(flag.status.code(), Some(2));
}

#[test]
fn fixture_inputs_exist() {
    for f in ["series_u1.json", "series_u2.json", "estimate_config.json"] {
        assert!(Path::new(&manifest_dir().join("tests/fixtures").join(f)).exists());
    }
}
