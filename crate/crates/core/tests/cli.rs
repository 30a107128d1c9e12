use std::path::Path;
use std::process::{Command, Output};

use harqbuf::model::{throughput_from_pe, PeCurve};

fn harqbuf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harqbuf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_spec(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SWEEP: &str = r#"kind = "throughput_vs_C"
seed = 4
trials = 2000

[params]
scheme = ["CC_SC", "IR"]
snr_db = 10
rate = 4
c = [0, 3]
n_max = 6
"#;

#[test]
fn validate_reports_point_count() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "s.toml", SWEEP);
    let out = harqbuf(&["validate", &spec]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("4 configuration point(s)"));
}

#[test]
fn spec_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "bad.toml",
        &SWEEP.replace("snr_db = 10", "snr_db = 10\nbogus = 1"),
    );
    let out = harqbuf(&["validate", &spec]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 8") && err.contains("bogus"), "{err}");
}

#[test]
fn run_refuses_grids() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "s.toml", SWEEP);
    let out = harqbuf(&["run", &spec, "--out", "-"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("harqbuf sweep"));

    let single = SWEEP
        .replace("[\"CC_SC\", \"IR\"]", "\"IR\"")
        .replace("[0, 3]", "3");
    let spec = write_spec(dir.path(), "one.toml", &single);
    let out = harqbuf(&["run", &spec, "--out", "-"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 2);
}

#[test]
fn sweep_output_is_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "s.toml", SWEEP);
    let a = harqbuf(&["sweep", &spec, "--workers", "1", "--out", "-"]);
    let b = harqbuf(&["sweep", &spec, "--workers", "8", "--out", "-"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);

    let file = dir.path().join("out.csv");
    let c = harqbuf(&[
        "sweep",
        &spec,
        "--workers",
        "3",
        "--out",
        file.to_str().unwrap(),
    ]);
    assert!(c.status.success());
    assert_eq!(std::fs::read(&file).unwrap(), a.stdout);
}

#[test]
fn seed_and_trials_flags_override_the_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "s.toml", SWEEP);
    let base = harqbuf(&["sweep", &spec, "--out", "-"]).stdout;
    let reseeded = harqbuf(&["sweep", &spec, "--seed", "5", "--out", "-"]).stdout;
    assert_ne!(base, reseeded);
    let text =
        String::from_utf8(harqbuf(&["sweep", &spec, "--trials", "700", "--out", "-"]).stdout)
            .unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let col = rdr
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == "trials")
        .unwrap();
    assert!(rdr.records().all(|r| &r.unwrap()[col] == "700"));
}

#[test]
fn csv_round_trip_reproduces_throughput() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "s.toml", SWEEP);
    let out = harqbuf(&["sweep", &spec, "--out", "-"]);
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let header = rdr.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let n_max = 6;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let num = |i: usize| rec[i].parse::<f64>().unwrap();
        let pe: Vec<f64> = (1..=n_max).map(|n| num(col(&format!("pe_{n}")))).collect();
        let trials: u64 = rec[col("trials")].parse().unwrap();
        let failures: Vec<u64> = pe
            .iter()
            .map(|p| (p * trials as f64).round() as u64)
            .collect();
        let t = throughput_from_pe(&PeCurve::from_counts(&failures, trials), num(col("rate")));
        assert!((t.throughput - num(col("throughput"))).abs() <= 1e-12);
        assert!((t.ci_halfwidth - num(col("ci95"))).abs() <= 1e-12);
        rows += 1;
    }
    assert_eq!(rows, 4);
}

#[test]
fn failed_points_exit_with_two() {
    // The received covariance overflows, so every session of the point fails.
    let dir = tempfile::tempdir().unwrap();
    let text = "kind = \"mimo\"\ntrials = 50\n[params]\nnt = 2\nsnr = 1e308\nrate = 5\nc = 5\n";
    let spec = write_spec(dir.path(), "m.toml", text);
    let out = harqbuf(&["run", &spec, "--out", "-"]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().contains("NaN"));
}
