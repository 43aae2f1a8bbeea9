use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> String {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.push("tests/data");
    p.push(name);
    p.to_string_lossy().into_owned()
}

fn rds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rds"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("valid JSON on stdout")
}

#[test]
fn lyapunov_certificate_for_shift_pair() {
    let (a, b) = (data("shift_a.json"), data("shift_b.json"));
    let out = rds(&[
        "certify", "cdlf", "--flavor", "lyapunov", "-a", &a, "-b", &b, "--json",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["flavor"], "lyapunov");
    assert_eq!(v["diag"].as_array().unwrap().len(), 2);
}

#[test]
fn stein_search_fails_definitively_for_shift_pair() {
    let (a, b) = (data("shift_a.json"), data("shift_b.json"));
    let out = rds(&[
        "certify", "cdlf", "--flavor", "stein", "-a", &a, "-b", &b, "--json",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["found"], false);
    let out = rds(&["certify", "clclf", "-a", &a, "-b", &b]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("no certificate exists"));
}

#[test]
fn certificates_round_trip_through_verify() {
    let (a, b) = (data("shift_a.json"), data("shift_b.json"));
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    let out = rds(&["certify", "-a", &a, "-b", &b, "--json"]);
    assert_eq!(code(&out), 0);
    std::fs::write(&cert, &out.stdout).unwrap();
    let cert = cert.to_string_lossy().into_owned();
    let out = rds(&["certify", "--verify", &cert, "-a", &a, "-b", &b, "--json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(json(&out)["verified"], true);

    // the same certificate does not fit a different pair
    let (c, d) = (data("cycle_a.json"), data("cycle_b.json"));
    let out = rds(&["certify", "--verify", &cert, "-a", &c, "-b", &d]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("rejected"));
}

#[test]
fn verdict_certificates_round_trip_through_verify() {
    let (a, b) = (data("leslie_a.json"), data("leslie_b.json"));
    let dir = tempfile::tempdir().unwrap();
    let out = rds(&[
        "check-rds",
        "--coupling",
        "leslie-single-row",
        "-a",
        &a,
        "-b",
        &b,
        "--json",
    ]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["status"], "certified");
    let cert = dir.path().join("cert.json");
    std::fs::write(&cert, v["certificate"].to_string()).unwrap();
    let cert = cert.to_string_lossy().into_owned();
    let out = rds(&[
        "certify",
        "--verify",
        &cert,
        "--coupling",
        "leslie-single-row",
        "-a",
        &a,
        "-b",
        &b,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = rds(&[
        "certify",
        "--verify",
        &cert,
        "--coupling",
        "leslie",
        "-a",
        &a,
        "-b",
        &b,
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn coupled_radius_of_printed_leslie_coupling() {
    let (a, b, d) = (
        data("leslie_a.json"),
        data("leslie_b.json"),
        data("leslie_d.json"),
    );
    let out = rds(&["rho-coupled", "-a", &a, "-b", &b, "-d", &d, "--json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&out);
    let rho = v["rho"].as_f64().unwrap();
    assert!((rho - 1.02).abs() <= 0.005, "{rho}");
    assert_eq!(v["coupling"], "leslie");
    assert_eq!(v["stable"], false);
}

#[test]
fn check_rds_reports_each_outcome() {
    let (a, b) = (data("shift_a.json"), data("shift_b.json"));
    let out = rds(&["check-rds", "-a", &a, "-b", &b, "--coupling", "diagonal"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("status: certified"));

    let (a, b) = (data("cycle_a.json"), data("cycle_b.json"));
    let v = json(&rds(&["check-rds", "-a", &a, "-b", &b, "--json"]));
    assert_eq!(v["reason"], "jlclf_irreducible");

    let (a, b) = (data("leslie_a.json"), data("leslie_b.json"));
    let out = rds(&[
        "check-rds",
        "-a",
        &a,
        "-b",
        &b,
        "--coupling",
        "leslie",
        "--json",
    ]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["status"], "refuted");
    assert!(v["rho_at_witness"].as_f64().unwrap() > 1.0);
}

#[test]
fn json_output_is_deterministic() {
    let (a, b) = (data("leslie_a.json"), data("leslie_b.json"));
    let args = [
        "check-rds",
        "-a",
        &a,
        "-b",
        &b,
        "--coupling",
        "leslie",
        "--seed",
        "7",
        "--json",
    ];
    let one = rds(&args);
    let two = rds(&args);
    assert_eq!(one.stdout, two.stdout);
    let args = [
        "find-destabilizer",
        "-a",
        &a,
        "-b",
        &b,
        "--coupling",
        "leslie",
        "--budget",
        "300",
        "--json",
    ];
    assert_eq!(rds(&args).stdout, rds(&args).stdout);
}

#[test]
fn exhausted_search_is_undecided() {
    let (a, b) = (data("shift_a.json"), data("shift_b.json"));
    let out = rds(&[
        "find-destabilizer",
        "-a",
        &a,
        "-b",
        &b,
        "--budget",
        "50",
        "--json",
    ]);
    assert_eq!(code(&out), 1);
    assert_eq!(json(&out)["found"], false);
}

#[test]
fn simulate_writes_trajectory_csv() {
    let (a, b, d) = (
        data("leslie_a.json"),
        data("leslie_b.json"),
        data("leslie_d.json"),
    );
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("run.csv");
    let csv_s = csv.to_string_lossy().into_owned();
    let out = rds(&[
        "simulate", "-a", &a, "-b", &b, "-d", &d, "--steps", "30", "--out", &csv_s, "--json",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x_1,x_2,x_3,y_1,y_2,y_3,norm"));
    assert_eq!(lines.count(), 31);
    assert!(json(&out)["growth_estimate"].as_f64().unwrap() > 0.0);
}

#[test]
fn row_selections_lists_every_choice() {
    let (a, b) = (data("leslie_a.json"), data("leslie_b.json"));
    let v = json(&rds(&["row-selections", "-a", &a, "-b", &b, "--json"]));
    assert_eq!(v["selections"].as_array().unwrap().len(), 8);
    assert_eq!(v["all_schur"], false);
}

#[test]
fn spectral_radius_of_single_matrix() {
    let a = data("leslie_a.json");
    let v = json(&rds(&["spectral-radius", "-a", &a, "--json"]));
    // largest root of x^3 - 0.3x^2 - 0.745x + 0.0585
    assert!((v["rho"].as_f64().unwrap() - 0.99173).abs() < 1e-5);
}

#[test]
fn input_errors_exit_2_and_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let good = data("shift_a.json");

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\"n\": 2, \"rows\": [[0.1, 1.0],").unwrap();
    let broken = broken.to_string_lossy().into_owned();
    let out = rds(&["check-rds", "-a", &broken, "-b", &good]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("broken.json") && err.contains("line"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);

    let negative = dir.path().join("negative.json");
    std::fs::write(&negative, r#"{"n": 2, "rows": [[0.1, -1.0], [0.0, 0.0]]}"#).unwrap();
    let negative = negative.to_string_lossy().into_owned();
    let out = rds(&["spectral-radius", "-a", &negative]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("negative.json"));

    let out = rds(&["check-rds", "-a", &good, "-b", &data("leslie_a.json")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("dimension mismatch"));

    let out = rds(&["check-rds", "-a", &good, "-b", &good, "--no-such-flag"]);
    assert_eq!(code(&out), 2);
    assert_eq!(stderr(&out).trim().lines().count(), 1);

    let missing = dir
        .path()
        .join("missing.json")
        .to_string_lossy()
        .into_owned();
    let out = rds(&["spectral-radius", "-a", &missing]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("missing.json"));
}

#[test]
fn leslie_flag_enforces_the_pattern() {
    let dir = tempfile::tempdir().unwrap();
    let off = dir.path().join("off_pattern.json");
    std::fs::write(
        &off,
        r#"{"n": 3, "rows": [[0.1, 0.2, 0.3], [0.4, 0.0, 0.5], [0.0, 0.6, 0.7]]}"#,
    )
    .unwrap();
    let off = off.to_string_lossy().into_owned();
    let out = rds(&["spectral-radius", "-a", &off]);
    assert_eq!(code(&out), 0);
    let out = rds(&["spectral-radius", "-a", &off, "--leslie"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("off_pattern.json"));
}

#[test]
fn unstable_input_is_rejected_for_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let big = dir.path().join("unstable.json");
    std::fs::write(&big, r#"{"n": 2, "rows": [[1.2, 0.0], [0.0, 0.1]]}"#).unwrap();
    let big = big.to_string_lossy().into_owned();
    let out = rds(&["check-rds", "-a", &big, "-b", &data("shift_b.json")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("not Schur-stable"));
}

#[test]
fn mismatched_kind_and_flavor_is_a_usage_error() {
    let (a, b) = (data("shift_a.json"), data("shift_b.json"));
    let out = rds(&["certify", "clclf", "--flavor", "stein", "-a", &a, "-b", &b]);
    assert_eq!(code(&out), 2);
}
