use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use prewhiten::error::exit;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prewhiten"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_scenario(dir: &Path) {
    fs::write(dir.join("sc.json"), r#"{"layout":{"kind":"table2_grid","nx":4,"ny":3},"n_time":120,"seed":5,"n_scans":2}"#)
        .unwrap();
}

#[test]
fn help_and_version_succeed() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["--help"])), exit::SUCCESS);
    let v = run(dir.path(), &["--version"]);
    assert_eq!(code(&v), exit::SUCCESS);
    assert!(String::from_utf8_lossy(&v.stdout).contains(prewhiten::VERSION));
}

#[test]
fn usage_errors_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &[])), exit::CONFIG);
    assert_eq!(code(&run(dir.path(), &["fit", "--bogus"])), exit::CONFIG);
    assert_eq!(code(&run(dir.path(), &["fit", "--order", "seven"])), exit::CONFIG);
    assert_eq!(code(&run(dir.path(), &["fit", "--correction", "holm"])), exit::CONFIG);
}

#[test]
fn invalid_settings_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    write_scenario(dir.path());
    let cases: &[&[&str]] = &[
        &["fit", "--scenario", "sc.json", "--order", "11"],
        &["fit", "--scenario", "sc.json", "--regularization", "local:0"],
        &["fit", "--scenario", "sc.json", "--lags", "20", "--volumes", "20"],
        &["fit", "--scenario", "sc.json", "--threads", "0"],
        &["fit", "--regularization", "none"],
        &["compare", "--scenario", "sc.json", "--strategy", "1/none"],
    ];
    for args in cases {
        let out = run(dir.path(), args);
        assert_eq!(code(&out), exit::CONFIG, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    fs::write(dir.path().join("bad.json"), r#"{"ar": {"order": 3}, "colour": 1}"#).unwrap();
    assert_eq!(code(&run(dir.path(), &["fit", "--config", "bad.json"])), exit::CONFIG);
}

#[test]
fn data_problems_exit_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(d, &["fit", "--bold", "missing.txt", "--regularization", "none"]);
    assert_eq!(code(&out), exit::DATA);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.txt"));

    fs::write(d.join("nan.txt"), "BOLD v1 3 2 1.0\n1,2\n3,nan\n5,6\n").unwrap();
    let out = run(d, &["fit", "--bold", "nan.txt", "--regularization", "none", "--no-drift"]);
    assert_eq!(code(&out), exit::DATA);
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 1, column 1"));

    fs::write(d.join("ragged.txt"), "BOLD v1 2 2 1.0\n1,2\n3\n").unwrap();
    assert_eq!(code(&run(d, &["fit", "--bold", "ragged.txt", "--regularization", "none"])), exit::DATA);

    let body: String = (0..30).map(|i| format!("{},{}\n", i % 4, (i * 7) % 5)).collect();
    fs::write(d.join("ok.txt"), format!("BOLD v1 30 2 1.0\n{body}")).unwrap();
    fs::write(d.join("events.csv"), "task,soon,1\n").unwrap();
    let out = run(d, &["fit", "--bold", "ok.txt", "--events", "events.csv", "--regularization", "none"]);
    assert_eq!(code(&out), exit::DATA, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn rank_deficient_design_exits_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let body: String = (0..50).map(|i| format!("{},{}\n", i % 7, (i * 3) % 11)).collect();
    fs::write(d.join("bold.txt"), format!("BOLD v1 50 2 1.0\n{body}")).unwrap();
    let ones: String = (0..50).map(|_| "1\n").collect();
    fs::write(d.join("nuis.txt"), format!("BOLD v1 50 1 1.0\n{ones}")).unwrap();
    let out = run(d, &["fit", "--bold", "bold.txt", "--nuisance", "nuis.txt", "--regularization", "none", "--no-drift"]);
    assert_eq!(code(&out), exit::NUMERIC, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_fit_diagnose_compare_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_scenario(d);
    let out = run(d, &["simulate", "--scenario", "sc.json", "--out", "sim"]);
    assert_eq!(code(&out), exit::SUCCESS, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["scan_000.txt", "scan_001.txt", "mesh.txt", "events.csv", "truth_phi.txt", "regions.csv", "manifest.json"] {
        assert!(d.join("sim").join(f).exists(), "{f}");
    }

    let out = run(
        d,
        &[
            "fit", "--bold", "sim/scan_000.txt", "--mesh", "sim/mesh.txt", "--events", "sim/events.csv", "--order", "3",
            "--out", "fit", "--vertex-csv", "--dump-whitener", "2",
        ],
    );
    assert_eq!(code(&out), exit::SUCCESS, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["n_vertices"], 12);
    assert_eq!(summary["n_time"], 120);
    for f in ["gls_residuals.txt", "whitener_v2.txt", "smoother.triplets", "vertices.csv", "summary.json", "config.json"] {
        assert!(d.join("fit").join(f).exists(), "{f}");
    }

    let out = run(
        d,
        &["diagnose", "--residuals", "fit/gls_residuals.txt", "--dof-mode", "ar", "--orders", "fit/reg_order.txt", "--out", "diag"],
    );
    assert_eq!(code(&out), exit::SUCCESS, "{}", String::from_utf8_lossy(&out.stderr));
    let diag: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(diag["n_analysed"], 12);
    let csv = fs::read_to_string(d.join("diag/diagnostics.csv")).unwrap();
    assert!(csv.starts_with("vertex,included,aci,lb_q,lb_dof,lb_p,lb_significant\n"));
    // AR(3)-adjusted: 20 - round(3 * 100 / 120) - 1 = 16.
    assert!(csv.lines().nth(1).unwrap().split(',').nth(4) == Some("16"), "{csv}");

    let out = run(
        d,
        &["compare", "--scenario", "sc.json", "--strategy", "1/local:5", "--strategy", "0/none", "--out", "cmp"],
    );
    assert_eq!(code(&out), exit::SUCCESS, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = fs::read_to_string(d.join("cmp/comparison.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2);
}

#[test]
fn diagnose_rejects_ar_mode_without_orders() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let body: String = (0..150).map(|i| format!("{}\n", (i * 13 % 17) as f64)).collect();
    fs::write(d.join("r.txt"), format!("BOLD v1 150 1 1.0\n{body}")).unwrap();
    assert_eq!(code(&run(d, &["diagnose", "--residuals", "r.txt", "--dof-mode", "ar"])), exit::CONFIG);
    assert_eq!(code(&run(d, &["diagnose", "--residuals", "r.txt"])), exit::SUCCESS);
}
