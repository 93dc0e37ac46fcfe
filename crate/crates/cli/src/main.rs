use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use immersed_core::studies::{emit, run, to_csv, to_json, OutputFormat, StudyConfig, StudyKind};

/// Immersed finite element experiments on a Cartesian background mesh.
#[derive(Parser, Debug)]
#[command(name = "immersed", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one manufactured problem and report errors and iterations.
    Solve(Flags),
    /// Condition numbers over a corner-cut volume-fraction sweep.
    Conditioning(Flags),
    /// Error rates over a sequence of meshes.
    Convergence(Flags),
    /// CG iteration counts with and without Schwarz preconditioning.
    Schwarz(Flags),
    /// Local Nitsche parameters and extended-control constants over cut offsets.
    ///
    /// Rows reuse the numeric columns: kappa_raw is the worst local Nitsche
    /// parameter, lambda_min the extended-control constant and lambda_max the
    /// inverse-estimate bound.
    Stability(Flags),
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Line-based `key value` file; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Geometry literal, e.g. circle:0.5,0.5,0.3 | plane:1,0,0.5 | corner:0.5,0.5,0.1 | annulus:0.5,0.5,0.15,0.4
    #[arg(long)]
    geometry: Option<String>,
    /// Background grid sizes (elements per side), comma separated.
    #[arg(long)]
    mesh: Option<String>,
    /// Polynomial orders, comma separated (1 or 2).
    #[arg(long)]
    p: Option<String>,
    /// none | ghost-face | ghost-elem-s0 | ghost-elem-s1 | agfem (comma separated for several).
    #[arg(long)]
    stab: Option<String>,
    /// Ghost-penalty coefficients per derivative order, e.g. 0.1 or 0.1,0.05.
    #[arg(long)]
    tau: Option<String>,
    /// Scale face penalties with h^(2j+1) instead of h^(2j-1).
    #[arg(long)]
    neumann_scaling: bool,
    /// local | global
    #[arg(long)]
    beta_mode: Option<String>,
    /// Constant c in the global Nitsche parameter c/h.
    #[arg(long)]
    beta_c: Option<String>,
    /// Aggregation threshold on the volume fraction.
    #[arg(long)]
    eta_star: Option<String>,
    /// dirichlet | neumann
    #[arg(long)]
    bc_cut: Option<String>,
    /// Manufactured solution: xy | x2-y2 | sinsin | zero
    #[arg(long)]
    mms: Option<String>,
    /// none | jacobi | as | ms (comma separated for several).
    #[arg(long)]
    precond: Option<String>,
    /// cut | all | threshold:<real>
    #[arg(long)]
    blocks: Option<String>,
    /// Relative spectral truncation of the Schwarz blocks.
    #[arg(long)]
    theta: Option<String>,
    /// Relative preconditioned residual for CG.
    #[arg(long)]
    tol: Option<String>,
    /// CG iteration limit (default 10 N).
    #[arg(long)]
    maxit: Option<String>,
    /// dense | lanczos
    #[arg(long)]
    cond: Option<String>,
    /// Swept values: log:a:b:n or a comma separated list.
    #[arg(long)]
    sweep: Option<String>,
    /// Quadtree depth of the cut-cell quadrature.
    #[arg(long)]
    depth: Option<String>,
    /// Output file; rows go to standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
    /// Seed for randomized probes.
    #[arg(long)]
    seed: Option<String>,
    /// Record wall time per row (the output is then no longer reproducible).
    #[arg(long)]
    timing: bool,
    /// Exit with status 2 when a study check fails.
    #[arg(long)]
    check: bool,
}

impl Flags {
    fn settings(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut put = |k: &'static str, v: &Option<String>| {
            if let Some(v) = v {
                out.push((k, v.clone()));
            }
        };
        put("geometry", &self.geometry);
        put("mesh", &self.mesh);
        put("p", &self.p);
        put("stab", &self.stab);
        put("tau", &self.tau);
        put("beta-mode", &self.beta_mode);
        put("beta-c", &self.beta_c);
        put("eta-star", &self.eta_star);
        put("bc-cut", &self.bc_cut);
        put("mms", &self.mms);
        put("precond", &self.precond);
        put("blocks", &self.blocks);
        put("theta", &self.theta);
        put("tol", &self.tol);
        put("maxit", &self.maxit);
        put("cond", &self.cond);
        put("sweep", &self.sweep);
        put("depth", &self.depth);
        put("format", &self.format);
        put("seed", &self.seed);
        if let Some(o) = &self.out {
            out.push(("out", o.display().to_string()));
        }
        for (k, on) in [("neumann-scaling", self.neumann_scaling), ("timing", self.timing), ("check", self.check)] {
            if on {
                out.push((k, "true".into()));
            }
        }
        out
    }
}

fn config_for(kind: StudyKind, flags: &Flags) -> Result<StudyConfig> {
    let mut cfg = StudyConfig::new(kind);
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_file_contents(&text).with_context(|| format!("in {}", path.display()))?;
        // the subcommand decides the study
        cfg.kind = kind;
    }
    for (k, v) in flags.settings() {
        cfg.set(k, &v)?;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<bool> {
    let (kind, flags) = match &cli.command {
        Command::Solve(f) => (StudyKind::Solve, f),
        Command::Conditioning(f) => (StudyKind::Conditioning, f),
        Command::Convergence(f) => (StudyKind::Convergence, f),
        Command::Schwarz(f) => (StudyKind::Schwarz, f),
        Command::Stability(f) => (StudyKind::Stability, f),
    };
    let cfg = config_for(kind, flags)?;
    let output = run(&cfg)?;
    match &cfg.out {
        Some(path) => emit(&output.rows, cfg.format, path)?,
        None => {
            let text = match cfg.format {
                OutputFormat::Csv => to_csv(&output.rows)?,
                OutputFormat::Json => to_json(&output.rows)? + "\n",
            };
            print!("{text}");
        }
    }
    eprint!("{}", output.report());
    Ok(!cfg.check || output.all_passed())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("check failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
