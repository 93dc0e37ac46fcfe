use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::assembly::{BetaMode, CutBc, StabMode};
use crate::solvers::{BlockStrategy, CondMethod};

use super::StudyError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyKind {
    Solve,
    Conditioning,
    Convergence,
    Schwarz,
    Stability,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Solve => "solve",
            StudyKind::Conditioning => "conditioning",
            StudyKind::Convergence => "convergence",
            StudyKind::Schwarz => "schwarz",
            StudyKind::Stability => "stability",
        }
    }
}

impl FromStr for StudyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s.trim() {
            "solve" => StudyKind::Solve,
            "conditioning" => StudyKind::Conditioning,
            "convergence" => StudyKind::Convergence,
            "schwarz" => StudyKind::Schwarz,
            "stability" => StudyKind::Stability,
            other => return Err(format!("unknown study '{other}'")),
        })
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecondKind {
    None,
    Jacobi,
    Additive,
    Multiplicative,
}

impl PrecondKind {
    pub fn name(self) -> &'static str {
        match self {
            PrecondKind::None => "none",
            PrecondKind::Jacobi => "jacobi",
            PrecondKind::Additive => "as",
            PrecondKind::Multiplicative => "ms",
        }
    }
}

impl FromStr for PrecondKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s.trim() {
            "none" => PrecondKind::None,
            "jacobi" => PrecondKind::Jacobi,
            "as" => PrecondKind::Additive,
            "ms" => PrecondKind::Multiplicative,
            other => return Err(format!("unknown preconditioner '{other}' (none | jacobi | as | ms)")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format '{other}' (csv | json)")),
        }
    }
}

/// Values of a swept parameter: an explicit list or `log:a:b:n`.
pub fn parse_sweep(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("log:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("sweep '{s}': expected log:a:b:n"));
        }
        let a: f64 = parts[0].parse().map_err(|_| format!("sweep '{s}': bad start"))?;
        let b: f64 = parts[1].parse().map_err(|_| format!("sweep '{s}': bad end"))?;
        let n: usize = parts[2].parse().map_err(|_| format!("sweep '{s}': bad count"))?;
        if !(a > 0.0 && b > 0.0) || n == 0 {
            return Err(format!("sweep '{s}': log-spaced values must be positive and n >= 1"));
        }
        if n == 1 {
            return Ok(vec![a]);
        }
        let (la, lb) = (a.log10(), b.log10());
        return Ok((0..n).map(|k| 10f64.powf(la + (lb - la) * k as f64 / (n - 1) as f64)).collect());
    }
    let vals: Result<Vec<f64>, _> = s.split(',').map(|v| v.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(format!("sweep '{s}': expected log:a:b:n or a comma-separated list")),
    }
}

fn parse_list<T: FromStr>(key: &str, s: &str) -> Result<Vec<T>, String> {
    let out: Result<Vec<T>, _> = s.split(',').map(|v| v.trim().parse::<T>()).collect();
    match out {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(format!("{key}: cannot parse '{s}'")),
    }
}

fn parse_one<T: FromStr>(key: &str, s: &str) -> Result<T, String> {
    s.trim().parse::<T>().map_err(|_| format!("{key}: cannot parse '{s}'"))
}

pub fn parse_blocks(s: &str) -> Result<BlockStrategy<f64>, String> {
    match s.trim() {
        "cut" => Ok(BlockStrategy::CutElements),
        "all" => Ok(BlockStrategy::AllElements),
        other => match other.strip_prefix("threshold:").map(str::parse::<f64>) {
            Some(Ok(t)) if t > 0.0 => Ok(BlockStrategy::Threshold(t)),
            _ => Err(format!("unknown block strategy '{other}' (cut | all | threshold:<real>)")),
        },
    }
}

fn parse_bool(key: &str, s: &str) -> Result<bool, String> {
    match s.trim() {
        "" | "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(format!("{key}: expected a boolean, got '{other}'")),
    }
}

/// Everything a study run needs. Fields left as `None` take the
/// study-specific default.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub kind: StudyKind,
    pub geometry: Option<String>,
    pub meshes: Option<Vec<usize>>,
    pub orders: Vec<usize>,
    pub stabs: Option<Vec<StabMode>>,
    pub tau: Vec<f64>,
    pub neumann_scaling: bool,
    pub beta_mode: Option<BetaMode>,
    pub beta_c: f64,
    pub eta_star: f64,
    pub max_chain: usize,
    pub cut_bc: Option<CutBc>,
    pub mms: Option<String>,
    pub preconds: Option<Vec<PrecondKind>>,
    pub blocks: BlockStrategy<f64>,
    pub theta: f64,
    pub tol: Option<f64>,
    pub maxit: Option<usize>,
    pub cond: CondMethod,
    pub sweep: Option<Vec<f64>>,
    pub depth: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub seed: u64,
    pub timing: bool,
    pub check: bool,
}

impl StudyConfig {
    pub fn new(kind: StudyKind) -> Self {
        Self {
            kind,
            geometry: None,
            meshes: None,
            orders: vec![1],
            stabs: None,
            tau: vec![0.1],
            neumann_scaling: false,
            beta_mode: None,
            beta_c: 10.0,
            eta_star: 1.0,
            max_chain: 10,
            cut_bc: None,
            mms: None,
            preconds: None,
            blocks: BlockStrategy::CutElements,
            theta: 1e-12,
            tol: None,
            maxit: None,
            cond: CondMethod::Dense,
            sweep: None,
            depth: None,
            out: None,
            format: OutputFormat::Csv,
            seed: 42,
            timing: false,
            check: false,
        }
    }

    /// Applies one `key value` setting. Keys match the long CLI flags
    /// without the leading dashes.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), StudyError> {
        let key = key.trim().trim_start_matches("--");
        let v = value.trim();
        let r: Result<(), String> = (|| {
            match key {
                "study" => self.kind = parse_one(key, v)?,
                "geometry" => {
                    v.parse::<crate::geometry::LevelSet<f64>>().map_err(|e| e.to_string())?;
                    self.geometry = Some(v.to_string());
                }
                "mesh" | "meshes" => {
                    let m: Vec<usize> = parse_list(key, v)?;
                    if m.contains(&0) {
                        return Err(format!("{key}: mesh sizes must be positive"));
                    }
                    self.meshes = Some(m);
                }
                "p" => {
                    let p: Vec<usize> = parse_list(key, v)?;
                    if p.iter().any(|&p| !(1..=2).contains(&p)) {
                        return Err(format!("{key}: only p = 1 or 2 is supported"));
                    }
                    self.orders = p;
                }
                "stab" => self.stabs = Some(parse_list(key, v)?),
                "tau" => {
                    let t: Vec<f64> = parse_list(key, v)?;
                    if t.iter().any(|&t| !(t >= 0.0)) {
                        return Err(format!("{key}: must be non-negative"));
                    }
                    self.tau = t;
                }
                "neumann-scaling" => self.neumann_scaling = parse_bool(key, v)?,
                "beta-mode" => self.beta_mode = Some(parse_one(key, v)?),
                "beta-c" => self.beta_c = parse_one(key, v)?,
                "eta-star" => self.eta_star = parse_one(key, v)?,
                "max-chain" => self.max_chain = parse_one(key, v)?,
                "bc-cut" => self.cut_bc = Some(parse_one(key, v)?),
                "mms" => {
                    v.parse::<crate::assembly::Manufactured<f64>>()?;
                    self.mms = Some(v.to_string());
                }
                "precond" => self.preconds = Some(parse_list(key, v)?),
                "blocks" => self.blocks = parse_blocks(v)?,
                "theta" => self.theta = parse_one(key, v)?,
                "tol" => self.tol = Some(parse_one(key, v)?),
                "maxit" => self.maxit = Some(parse_one(key, v)?),
                "cond" => {
                    self.cond = match v {
                        "dense" => CondMethod::Dense,
                        "lanczos" => CondMethod::Lanczos,
                        other => return Err(format!("cond: unknown method '{other}' (dense | lanczos)")),
                    }
                }
                "sweep" => self.sweep = Some(parse_sweep(v)?),
                "depth" => self.depth = Some(parse_one(key, v)?),
                "out" => self.out = Some(PathBuf::from(v)),
                "format" => self.format = parse_one(key, v)?,
                "seed" => self.seed = parse_one(key, v)?,
                "timing" => self.timing = parse_bool(key, v)?,
                "check" => self.check = parse_bool(key, v)?,
                other => return Err(format!("unknown setting '{other}'")),
            }
            Ok(())
        })();
        r.map_err(StudyError::Config)
    }

    /// Reads a line-based `key value` file; `#` starts a comment.
    pub fn apply_file_contents(&mut self, text: &str) -> Result<(), StudyError> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = match line.split_once(char::is_whitespace) {
                Some((k, v)) => (k, v.trim()),
                None => (line, ""),
            };
            self.set(k, v).map_err(|e| StudyError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }
}
