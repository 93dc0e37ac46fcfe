//! Full pipeline runs: single precision, study reproducibility and output.

use immersed_core::assembly::{assemble, error_norms, CutBc, Manufactured, ProblemSpec, StabMode, StabilizationSpec};
use immersed_core::quadrature::QuadConfig;
use immersed_core::solvers::{pcg, Jacobi, Preconditioner, SolveOptions};
use immersed_core::studies::{emit, parse_csv, run, to_csv, OutputFormat, StudyConfig, StudyKind, CSV_HEADER};
use immersed_core::{DiscretizationF32, DiscretizationF64, LevelSetF32, LevelSetF64, MeshF32, MeshF64};

#[test]
fn single_and_double_precision_agree() {
    let stab32 = StabilizationSpec::<f32>::new(StabMode::GhostFace);
    let disc32 = DiscretizationF32::new(&MeshF32::unit_square(8).unwrap(), &LevelSetF32::circle(0.5, 0.5, 0.3), 1, QuadConfig::new(1), &stab32).unwrap();
    let pr32 = ProblemSpec::new(Manufactured::SinSin, CutBc::Dirichlet);
    let sys32 = assemble(&disc32, &pr32, &stab32).unwrap();
    let j32 = Jacobi::new(&sys32.matrix).unwrap();
    let (x32, rep32) = pcg(&sys32.matrix, &sys32.rhs, Some(&j32 as &dyn Preconditioner<f32>), &SolveOptions { tol: 1e-5, maxit: None }).unwrap();
    assert!(rep32.converged);
    let e32 = error_norms(&disc32, &sys32, &sys32.expand(&x32), &pr32);

    let stab64 = StabilizationSpec::<f64>::new(StabMode::GhostFace);
    let disc64 = DiscretizationF64::new(&MeshF64::unit_square(8).unwrap(), &LevelSetF64::circle(0.5, 0.5, 0.3), 1, QuadConfig::new(1), &stab64).unwrap();
    let pr64 = ProblemSpec::new(Manufactured::SinSin, CutBc::Dirichlet);
    let sys64 = assemble(&disc64, &pr64, &stab64).unwrap();
    let j64 = Jacobi::new(&sys64.matrix).unwrap();
    let (x64, _) = pcg(&sys64.matrix, &sys64.rhs, Some(&j64 as &dyn Preconditioner<f64>), &SolveOptions { tol: 1e-10, maxit: None }).unwrap();
    let e64 = error_norms(&disc64, &sys64, &sys64.expand(&x64), &pr64);

    assert_eq!(sys32.matrix.rows, sys64.matrix.rows);
    assert!(((e32.energy_h as f64) / e64.energy_h - 1.0).abs() < 1e-3, "{} vs {}", e32.energy_h, e64.energy_h);
}

fn small_config(kind: StudyKind) -> StudyConfig {
    let mut cfg = StudyConfig::new(kind);
    let settings: &[(&str, &str)] = match kind {
        StudyKind::Conditioning => &[("sweep", "log:1e-1:1e-3:3"), ("stab", "none,agfem")],
        StudyKind::Convergence => &[("mesh", "8,16"), ("stab", "ghost-face")],
        StudyKind::Schwarz => &[("mesh", "8"), ("sweep", "log:1e-1:1e-3:3")],
        StudyKind::Stability => &[("sweep", "log:1e-1:1e-3:3")],
        StudyKind::Solve => &[("mesh", "8")],
    };
    for (k, v) in settings {
        cfg.set(k, v).unwrap();
    }
    cfg
}

#[test]
fn every_study_is_reproducible_byte_for_byte() {
    for kind in [StudyKind::Solve, StudyKind::Conditioning, StudyKind::Convergence, StudyKind::Schwarz, StudyKind::Stability] {
        let cfg = small_config(kind);
        let a = to_csv(&run(&cfg).unwrap().rows).unwrap();
        let b = to_csv(&run(&cfg).unwrap().rows).unwrap();
        assert_eq!(a, b, "{kind}");
        assert!(a.starts_with(CSV_HEADER));
        // runtime stays empty unless timing is requested
        assert!(parse_csv(&a).unwrap().iter().all(|r| r.runtime_ms.is_none()));
    }
}

#[test]
fn emitted_files_round_trip() {
    let rows = run(&small_config(StudyKind::Convergence)).unwrap().rows;
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("rows.csv");
    emit(&rows, OutputFormat::Csv, &csv_path).unwrap();
    assert_eq!(parse_csv(&std::fs::read_to_string(&csv_path).unwrap()).unwrap(), rows);
    let json_path = dir.path().join("rows.json");
    emit(&rows, OutputFormat::Json, &json_path).unwrap();
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    let arr = json.as_array().unwrap();
    assert_eq!(arr.len(), rows.len());
    let keys: Vec<&str> = arr[0].as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys.len(), CSV_HEADER.split(',').count());
    assert!(emit(&rows, OutputFormat::Csv, &dir.path().join("missing").join("rows.csv")).is_err());
}

#[test]
fn convergence_rows_show_decreasing_errors() {
    let rows = run(&small_config(StudyKind::Convergence)).unwrap().rows;
    assert_eq!(rows.len(), 2);
    assert!(rows[1].energy_err.unwrap() < rows[0].energy_err.unwrap());
    assert!(rows[1].l2_err.unwrap() < rows[0].l2_err.unwrap());
    assert!(rows.iter().all(|r| r.iters.unwrap() > 0));
}

#[test]
fn ghost_face_conditioning_is_robust_across_tau() {
    let spread = |tau: &str| {
        let mut cfg = StudyConfig::new(StudyKind::Conditioning);
        for (k, v) in [("stab", "ghost-face"), ("tau", tau), ("sweep", "log:1e-1:1e-4:7")] {
            cfg.set(k, v).unwrap();
        }
        let kappa: Vec<f64> = run(&cfg).unwrap().rows.iter().map(|r| r.kappa_raw.unwrap()).collect();
        kappa.iter().copied().fold(f64::MIN, f64::max) / kappa.iter().copied().fold(f64::MAX, f64::min)
    };
    for tau in ["0.01", "0.1", "1"] {
        assert!(spread(tau) < 10.0, "tau {tau}: {}", spread(tau));
    }
    // switching the penalty off brings the small-cut blow-up back
    assert!(spread("0") > 1e3);
}
