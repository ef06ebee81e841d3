use std::path::Path;

use sosp_harness::cli::{run, EXIT_INPUT, EXIT_OK, EXIT_USAGE};
use sosp_harness::io::{read_json, ReportFile, SCHEMA_VERSION};

fn sosp(args: &[&str]) -> i32 {
    run(std::iter::once("sosp").chain(args.iter().copied()))
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn train_then_check() {
    let dir = tempfile::tempdir().unwrap();
    let (p, d, out) = (path(dir.path(), "p.json"), path(dir.path(), "d.json"), path(dir.path(), "r.json"));
    let code = sosp(&[
        "train", "--seed", "3", "--dx", "3", "--dh", "2", "--m", "30", "--iters", "200", "--params-out", &p,
        "--data-out", &d,
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(sosp(&["check", "--params", &p, "--data", &d, "--out", &out]), EXIT_OK);
    let report: ReportFile = read_json(Path::new(&out)).unwrap();
    assert_eq!(report.schema_version, SCHEMA_VERSION);
    assert!(["local_minimum", "sosp", "descent"].contains(&report.kind.as_str()));
    // 200 Adam steps leave a nonzero gradient
    assert_eq!(report.kind, "descent");
}

#[test]
fn synthesized_perfect_fit_is_sosp() {
    let dir = tempfile::tempdir().unwrap();
    let (p, d, out) = (path(dir.path(), "p.json"), path(dir.path(), "d.json"), path(dir.path(), "r.json"));
    let code = sosp(&[
        "synth", "--placement", "doubly-flat", "--residual", "0", "--params-out", &p, "--data-out", &d,
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(sosp(&["check", "--params", &p, "--data", &d, "--out", &out]), EXIT_OK);
    let report: ReportFile = read_json(Path::new(&out)).unwrap();
    assert_eq!(report.kind, "sosp");
    assert_eq!((report.diagnostics.k, report.diagnostics.l, report.diagnostics.m), (1, 1, 1));
}

#[test]
fn stats_writes_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "agg.json");
    let code = sosp(&["stats", "--dx", "4", "--m", "50", "--runs", "2", "--iters", "300", "--out", &out]);
    assert_eq!(code, EXIT_OK);
    let agg: serde_json::Value = read_json(Path::new(&out)).unwrap();
    assert_eq!(agg["runs"], 2);
    assert_eq!(agg["reports"].as_array().unwrap().len(), 2);
}

#[test]
fn error_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sosp(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(sosp(&["check", "--params", "only.json"]), EXIT_USAGE);
    let missing = path(dir.path(), "missing.json");
    assert_eq!(sosp(&["check", "--params", &missing, "--data", &missing]), EXIT_INPUT);
    let bad = path(dir.path(), "bad.json");
    std::fs::write(&bad, "{\"d_x\": 1").unwrap();
    assert_eq!(sosp(&["check", "--params", &bad, "--data", &bad]), EXIT_INPUT);
}

#[test]
fn seed_variable_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_sosp");
    let synth = |seed_flag: &str, env: Option<&str>, tag: &str| {
        let (p, d) = (path(dir.path(), &format!("p{tag}.json")), path(dir.path(), &format!("d{tag}.json")));
        let mut cmd = std::process::Command::new(bin);
        cmd.args(["synth", "--seed", seed_flag, "--params-out", &p, "--data-out", &d]);
        match env {
            Some(v) => cmd.env("SOSP_SEED", v),
            None => cmd.env_remove("SOSP_SEED"),
        };
        let status = cmd.status().unwrap().code().unwrap();
        (status, std::fs::read_to_string(&p).ok())
    };
    let (code, direct) = synth("5", None, "a");
    assert_eq!(code, EXIT_OK);
    let (code, overridden) = synth("0", Some("5"), "b");
    assert_eq!(code, EXIT_OK);
    assert_eq!(direct, overridden);
    let (_, other) = synth("0", None, "c");
    assert_ne!(direct, other);
    assert_eq!(synth("0", Some("five"), "d").0, EXIT_INPUT);
}
