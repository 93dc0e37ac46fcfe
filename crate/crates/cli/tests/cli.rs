use std::process::{Command, Output};

use immersed_core::studies::parse_csv;

fn immersed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_immersed")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn a_passing_check_exits_zero() {
    let out = immersed(&["stability", "--sweep", "log:1e-1:1e-4:4", "--check"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(parse_csv(&stdout(&out)).unwrap().len(), 12);
}

#[test]
fn a_failing_check_exits_two() {
    let out = immersed(&["conditioning", "--stab", "ghost-face", "--tau", "0", "--sweep", "log:1e-1:1e-6:4", "--check"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL"));
    // without --check the same run succeeds
    let out = immersed(&["conditioning", "--stab", "ghost-face", "--tau", "0", "--sweep", "log:1e-1:1e-6:4"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn bad_input_exits_one() {
    for args in [
        &["solve", "--geometry", "circle:bad"][..],
        &["solve", "--p", "7"],
        &["solve", "--config", "/nonexistent/immersed.cfg"],
    ] {
        let out = immersed(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
    assert_eq!(immersed(&["frobnicate"]).status.code(), Some(2), "clap usage errors");
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.cfg");
    std::fs::write(&cfg, "# small run\nmesh 8,16\nstab agfem\ngeometry circle:0.5,0.5,0.35\n").unwrap();
    let cfg = cfg.to_str().unwrap();

    let rows = parse_csv(&stdout(&immersed(&["convergence", "--config", cfg]))).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.stab == "agfem" && r.geometry == "circle:0.5,0.5,0.35"));

    let rows = parse_csv(&stdout(&immersed(&["convergence", "--config", cfg, "--mesh", "8", "--stab", "ghost-face"]))).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].stab, "ghost-face");
    assert_eq!(rows[0].geometry, "circle:0.5,0.5,0.35");
}

#[test]
fn output_files_and_formats() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rows.csv");
    let out = immersed(&["solve", "--mesh", "8", "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let from_file = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(from_file, stdout(&immersed(&["solve", "--mesh", "8"])));

    let json = stdout(&immersed(&["solve", "--mesh", "8", "--format", "json"]));
    assert!(json.trim_start().starts_with('['));
    assert!(json.contains("\"precond\": \"jacobi\""));
}

#[test]
fn runs_are_reproducible() {
    let args = ["schwarz", "--mesh", "8", "--sweep", "log:1e-1:1e-4:3"];
    assert_eq!(immersed(&args).stdout, immersed(&args).stdout);
}
