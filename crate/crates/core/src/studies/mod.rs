//! Experiment harness: conditioning, convergence, Schwarz and stability
//! sweeps with CSV/JSON output and log-log fits.

mod config;
mod runs;

pub use config::{parse_blocks, parse_sweep, OutputFormat, PrecondKind, StudyConfig, StudyKind};
pub use runs::{extended_control, run, run_conditioning, run_convergence, run_schwarz, run_solve, run_stability, ControlConstants};

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::AssemblyError;
use crate::geometry::GeometryError;
use crate::solvers::SolverError;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("nothing to emit")]
    NoRows,
    #[error("malformed CSV: {0}")]
    Csv(String),
}

/// Exact CSV header, also the JSON key order.
pub const CSV_HEADER: &str = "study,geometry,p,stab,precond,h,eta_min,kappa_raw,kappa_jacobi,lambda_min,lambda_max,energy_err,l2_err,iters,residual,runtime_ms";

/// One measurement. Missing values stay `None` and are written empty.
///
/// The stability study stores the worst local Nitsche parameter in
/// `kappa_raw`, the extended-control constant in `lambda_min` and the
/// ghost-penalty inverse constant in `lambda_max`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub study: String,
    pub geometry: String,
    pub p: usize,
    pub stab: String,
    pub precond: String,
    pub h: Option<f64>,
    pub eta_min: Option<f64>,
    pub kappa_raw: Option<f64>,
    pub kappa_jacobi: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub energy_err: Option<f64>,
    pub l2_err: Option<f64>,
    pub iters: Option<usize>,
    pub residual: Option<f64>,
    pub runtime_ms: Option<f64>,
}

/// `{:e}` with 17 significant digits; enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_f(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

impl StudyRow {
    fn csv_fields(&self) -> Vec<String> {
        vec![
            self.study.clone(),
            self.geometry.clone(),
            self.p.to_string(),
            self.stab.clone(),
            self.precond.clone(),
            opt_f(self.h),
            opt_f(self.eta_min),
            opt_f(self.kappa_raw),
            opt_f(self.kappa_jacobi),
            opt_f(self.lambda_min),
            opt_f(self.lambda_max),
            opt_f(self.energy_err),
            opt_f(self.l2_err),
            self.iters.map(|i| i.to_string()).unwrap_or_default(),
            opt_f(self.residual),
            opt_f(self.runtime_ms),
        ]
    }

    /// Rows must not carry non-finite numbers.
    pub fn is_finite(&self) -> bool {
        [self.h, self.eta_min, self.kappa_raw, self.kappa_jacobi, self.lambda_min, self.lambda_max, self.energy_err, self.l2_err, self.residual, self.runtime_ms]
            .iter()
            .all(|v| v.is_none_or(f64::is_finite))
    }
}

pub fn to_csv(rows: &[StudyRow]) -> Result<String, StudyError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(',')).map_err(|e| StudyError::Csv(e.to_string()))?;
    for r in rows {
        w.write_record(r.csv_fields()).map_err(|e| StudyError::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| StudyError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| StudyError::Csv(e.to_string()))
}

pub fn to_json(rows: &[StudyRow]) -> Result<String, StudyError> {
    serde_json::to_string_pretty(rows).map_err(|e| StudyError::Csv(e.to_string()))
}

/// Parses CSV produced by [`to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<StudyRow>, StudyError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = rd.headers().map_err(|e| StudyError::Csv(e.to_string()))?.iter().map(String::from).collect();
    if header.join(",") != CSV_HEADER {
        return Err(StudyError::Csv(format!("unexpected header '{}'", header.join(","))));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| StudyError::Csv(e.to_string()))?;
        let f = |i: usize| -> Result<Option<f64>, StudyError> {
            let s = &rec[i];
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| StudyError::Csv(format!("bad number '{s}'")))
            }
        };
        rows.push(StudyRow {
            study: rec[0].to_string(),
            geometry: rec[1].to_string(),
            p: rec[2].parse().map_err(|_| StudyError::Csv(format!("bad order '{}'", &rec[2])))?,
            stab: rec[3].to_string(),
            precond: rec[4].to_string(),
            h: f(5)?,
            eta_min: f(6)?,
            kappa_raw: f(7)?,
            kappa_jacobi: f(8)?,
            lambda_min: f(9)?,
            lambda_max: f(10)?,
            energy_err: f(11)?,
            l2_err: f(12)?,
            iters: if rec[13].is_empty() { None } else { Some(rec[13].parse().map_err(|_| StudyError::Csv(format!("bad count '{}'", &rec[13])))?) },
            residual: f(14)?,
            runtime_ms: f(15)?,
        });
    }
    Ok(rows)
}

/// Writes rows to `path`.
pub fn emit(rows: &[StudyRow], format: OutputFormat, path: &Path) -> Result<(), StudyError> {
    if rows.is_empty() {
        return Err(StudyError::NoRows);
    }
    let text = match format {
        OutputFormat::Csv => to_csv(rows)?,
        OutputFormat::Json => to_json(rows)?,
    };
    let io = |e| StudyError::Io { path: path.display().to_string(), source: e };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)
}

/// Ordinary least squares `y = slope x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Residual sum of squares.
    pub residual: f64,
    /// Set when `r2 < 0.95`.
    pub flagged: bool,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<Fit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - residual / syy };
    Some(Fit { slope, intercept, r2, residual, flagged: r2 < 0.95 })
}

/// Fit of `log y` against `log x`.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Option<Fit> {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}

/// A derived quantity with an optional pass/fail verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub value: f64,
    pub fit: Option<Fit>,
    /// `None` when the quantity is informational only.
    pub passed: Option<bool>,
    pub note: String,
}

impl Summary {
    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Self { name: name.into(), value, fit: None, passed: None, note: String::new() }
    }

    pub fn check(name: impl Into<String>, value: f64, passed: bool, note: impl Into<String>) -> Self {
        Self { name: name.into(), value, fit: None, passed: Some(passed), note: note.into() }
    }

    pub fn with_fit(mut self, fit: Fit) -> Self {
        self.fit = Some(fit);
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StudyOutput {
    pub rows: Vec<StudyRow>,
    pub summaries: Vec<Summary>,
}

impl StudyOutput {
    pub fn all_passed(&self) -> bool {
        self.summaries.iter().all(|s| s.passed != Some(false))
    }

    /// Human-readable summary lines.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for s in &self.summaries {
            let verdict = match s.passed {
                Some(true) => "ok  ",
                Some(false) => "FAIL",
                None => "    ",
            };
            out.push_str(&format!("{verdict} {} = {}", s.name, format_float(s.value)));
            if let Some(f) = s.fit {
                out.push_str(&format!(" (R^2 = {:.4}{})", f.r2, if f.flagged { ", poor fit" } else { "" }));
            }
            if !s.note.is_empty() {
                out.push_str(&format!("  [{}]", s.note));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> StudyRow {
        StudyRow {
            study: "conditioning".into(),
            geometry: "corner:0.5,0.5,0.1".into(),
            p: 2,
            stab: "none".into(),
            precond: String::new(),
            h: Some(0.125),
            eta_min: Some(1.0 / 3.0),
            kappa_raw: Some(1.234_567_890_123_456_7e9),
            lambda_min: Some(f64::MIN_POSITIVE),
            iters: Some(17),
            ..Default::default()
        }
    }

    #[test]
    fn csv_has_exact_header_and_round_trips() {
        let rows = vec![row(), StudyRow { p: 1, ..row() }];
        let text = to_csv(&rows).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].contains(",,"), "empty optional fields: {}", lines[1]);
        assert_eq!(parse_csv(&text).unwrap(), rows);
    }

    #[test]
    fn seventeen_significant_digits() {
        let s = format_float(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        for x in [std::f64::consts::PI, 1.0 / 3.0, 6.02214076e23, 5e-324] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn json_keys_match_header() {
        let text = to_json(&[row()]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let keys: Vec<&str> = v[0].as_object().unwrap().keys().map(String::as_str).collect();
        let mut expected: Vec<&str> = CSV_HEADER.split(',').collect();
        let mut got = keys.clone();
        expected.sort_unstable();
        got.sort_unstable();
        assert_eq!(got, expected);
        assert!(v[0]["kappa_jacobi"].is_null());
    }

    #[test]
    fn emit_rejects_empty_and_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        assert!(matches!(emit(&[], OutputFormat::Csv, &path), Err(StudyError::NoRows)));
        emit(&[row()], OutputFormat::Csv, &path).unwrap();
        assert_eq!(parse_csv(&std::fs::read_to_string(&path).unwrap()).unwrap(), vec![row()]);
        let bad = dir.path().join("missing").join("rows.csv");
        assert!(matches!(emit(&[row()], OutputFormat::Json, &bad), Err(StudyError::Io { .. })));
    }

    #[test]
    fn least_squares_recovers_power_law() {
        let x: Vec<f64> = (1..=6).map(|k| 10f64.powi(k)).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(2.5)).collect();
        let f = fit_loglog(&x, &y).unwrap();
        assert!((f.slope - 2.5).abs() < 1e-12 && (f.intercept - 3f64.ln()).abs() < 1e-10);
        assert!(f.r2 > 0.999_999 && !f.flagged);
        let noisy = fit_line(&[0.0, 1.0, 2.0, 3.0], &[0.0, 5.0, -5.0, 0.0]).unwrap();
        assert!(noisy.flagged);
        assert!(fit_line(&[1.0], &[1.0]).is_none());
        assert!(fit_line(&[1.0, 1.0], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn sweep_parsing() {
        let v = parse_sweep("log:1e-1:1e-4:7").unwrap();
        assert_eq!(v.len(), 7);
        assert!((v[0] - 0.1).abs() < 1e-15 && (v[6] - 1e-4).abs() < 1e-18);
        assert!((v[1] / v[0] - 10f64.powf(-0.5)).abs() < 1e-12);
        assert_eq!(parse_sweep("0.5, 0.25").unwrap(), vec![0.5, 0.25]);
        assert!(parse_sweep("log:0:1:3").is_err());
        assert!(parse_sweep("log:1:2").is_err());
        assert!(parse_sweep("a,b").is_err());
    }

    #[test]
    fn config_file_and_overrides() {
        let mut c = StudyConfig::new(StudyKind::Solve);
        c.apply_file_contents("# comment\nstudy conditioning\nmesh 8,16\np 1,2\nstab none,ghost-face\nsweep log:1e-1:1e-2:2\nblocks threshold:0.01\ntiming\n").unwrap();
        assert_eq!(c.kind, StudyKind::Conditioning);
        assert_eq!(c.meshes, Some(vec![8, 16]));
        assert_eq!(c.orders, vec![1, 2]);
        assert_eq!(c.blocks, crate::solvers::BlockStrategy::Threshold(0.01));
        assert!(c.timing);
        c.set("--mesh", "32").unwrap();
        assert_eq!(c.meshes, Some(vec![32]));
        let err = c.apply_file_contents("p 3\n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        assert!(c.set("precond", "ilu").is_err());
        assert!(c.set("geometry", "circle:1").is_err());
        assert!(c.set("bogus", "1").is_err());
    }
}
