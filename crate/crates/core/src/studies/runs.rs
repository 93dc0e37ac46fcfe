use std::time::Instant;

use rayon::prelude::*;

use crate::assembly::{
    assemble, error_norms, nitsche_parameter_local, stabilization_matrix, stiffness_active, stiffness_physical, BetaMode, CutBc, Discretization, Manufactured, ProblemSpec, SparseSystem,
    StabMode, StabilizationSpec,
};
use crate::geometry::{BackgroundMesh, LevelSet};
use crate::quadrature::QuadConfig;
use crate::solvers::{
    build_schwarz, cholesky, condition_number, jacobi_scale, pcg, select_blocks, sym_eigen, Csr, DenseMatrix, Jacobi, Preconditioner, SchwarzMode, SolveOptions, SolveReport, SolverError,
};

use super::config::{parse_sweep, PrecondKind, StudyConfig, StudyKind};
use super::{fit_loglog, StudyError, StudyOutput, StudyRow, Summary};

/// Runs the study selected by `cfg.kind`.
pub fn run(cfg: &StudyConfig) -> Result<StudyOutput, StudyError> {
    match cfg.kind {
        StudyKind::Solve => run_solve(cfg),
        StudyKind::Conditioning => run_conditioning(cfg),
        StudyKind::Convergence => run_convergence(cfg),
        StudyKind::Schwarz => run_schwarz(cfg),
        StudyKind::Stability => run_stability(cfg),
    }
}

fn unit_mesh(n: usize) -> Result<BackgroundMesh<f64>, StudyError> {
    Ok(BackgroundMesh::unit_square(n)?)
}

/// Corner sweeps go deeper so that sub-cells stay below the corner size
/// down to small volume fractions.
fn quad_config(cfg: &StudyConfig, p: usize) -> QuadConfig {
    let default = match cfg.kind {
        StudyKind::Conditioning | StudyKind::Schwarz => 8,
        _ => 6,
    };
    QuadConfig::new(p).with_depth(cfg.depth.unwrap_or(default))
}

fn stab_spec(cfg: &StudyConfig, mode: StabMode) -> StabilizationSpec<f64> {
    let mut s = StabilizationSpec::new(mode);
    s.tau = cfg.tau.clone();
    s.neumann_scaling = cfg.neumann_scaling;
    if let Some(b) = cfg.beta_mode {
        s.beta_mode = b;
    }
    s.beta_c = cfg.beta_c;
    s.eta_star = cfg.eta_star;
    s.max_chain = cfg.max_chain;
    s
}

fn geometry(cfg: &StudyConfig, default: &str) -> Result<(String, LevelSet<f64>), StudyError> {
    let lit = cfg.geometry.clone().unwrap_or_else(|| default.to_string());
    let geo = lit.parse().map_err(|e: crate::geometry::GeometryError| StudyError::Config(e.to_string()))?;
    Ok((lit, geo))
}

fn corner_vertex(cfg: &StudyConfig) -> Result<(f64, f64), StudyError> {
    match geometry(cfg, "corner:0.5,0.5,0.1")?.1 {
        LevelSet::Corner { a, b, .. } => Ok((a, b)),
        _ => Err(StudyError::Config("this study needs a corner geometry (corner:a,b,s; s is replaced by sqrt(eta) h)".into())),
    }
}

fn manufactured(cfg: &StudyConfig, default: &str) -> Result<Manufactured<f64>, StudyError> {
    cfg.mms.as_deref().unwrap_or(default).parse().map_err(StudyError::Config)
}

fn sweep(cfg: &StudyConfig, default: &str) -> Vec<f64> {
    cfg.sweep.clone().unwrap_or_else(|| parse_sweep(default).expect("valid default sweep"))
}

fn elapsed_ms(cfg: &StudyConfig, start: Instant) -> Option<f64> {
    cfg.timing.then(|| start.elapsed().as_secs_f64() * 1e3)
}

/// Solves the reduced system with CG and the requested preconditioner.
pub(crate) fn solve_system(disc: &Discretization<f64>, sys: &SparseSystem<f64>, kind: PrecondKind, cfg: &StudyConfig, tol: f64) -> Result<(Vec<f64>, SolveReport<f64>), StudyError> {
    let opts = SolveOptions { tol, maxit: cfg.maxit };
    let a = &sys.matrix;
    let result = match kind {
        PrecondKind::None => pcg(a, &sys.rhs, None, &opts)?,
        PrecondKind::Jacobi => {
            let j = Jacobi::new(a)?;
            pcg(a, &sys.rhs, Some(&j as &dyn Preconditioner<f64>), &opts)?
        }
        PrecondKind::Additive | PrecondKind::Multiplicative => {
            let blocks = select_blocks(&disc.active, &disc.space, &sys.map, cfg.blocks);
            let mode = if kind == PrecondKind::Additive { SchwarzMode::Additive } else { SchwarzMode::Multiplicative };
            let b = build_schwarz(a, &blocks, mode, cfg.theta)?;
            pcg(a, &sys.rhs, Some(&b as &dyn Preconditioner<f64>), &opts)?
        }
    };
    Ok(result)
}

fn base_row(cfg: &StudyConfig, geo: &str, p: usize, stab: StabMode, precond: &str, h: f64) -> StudyRow {
    StudyRow { study: cfg.kind.name().into(), geometry: geo.into(), p, stab: stab.name().into(), precond: precond.into(), h: Some(h), ..Default::default() }
}

fn spectrum_or_none(a: &Csr<f64>, cfg: &StudyConfig) -> Result<Option<crate::solvers::Spectrum<f64>>, StudyError> {
    match condition_number(a, cfg.cond) {
        Ok(s) => Ok(Some(s)),
        Err(SolverError::Indefinite) | Err(SolverError::NotSpd) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn ratio(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::MIN, f64::max);
    let min = v.iter().copied().fold(f64::MAX, f64::min);
    max / min
}

/// Corner-cut condition numbers over an `eta` sweep.
pub fn run_conditioning(cfg: &StudyConfig) -> Result<StudyOutput, StudyError> {
    let (a, b) = corner_vertex(cfg)?;
    let meshes = cfg.meshes.clone().unwrap_or_else(|| vec![8]);
    let stabs = cfg.stabs.clone().unwrap_or_else(|| vec![StabMode::None]);
    let etas = sweep(cfg, "log:1e-1:1e-4:7");
    if let Some(&n) = meshes.iter().find(|&&n| n > 16) {
        if cfg.orders.contains(&2) {
            return Err(StudyError::Config(format!("p=2 conditioning is limited to 16x16 grids (got {n})")));
        }
    }
    let problem = ProblemSpec::new(manufactured(cfg, "zero")?, cfg.cut_bc.unwrap_or(CutBc::Neumann));
    let mut cases = Vec::new();
    for &stab in &stabs {
        for &p in &cfg.orders {
            for &n in &meshes {
                for &eta in &etas {
                    cases.push((stab, p, n, eta));
                }
            }
        }
    }
    let rows: Result<Vec<StudyRow>, StudyError> = cases
        .par_iter()
        .map(|&(stab, p, n, eta)| {
            let start = Instant::now();
            let mesh = unit_mesh(n)?;
            let s = eta.sqrt() * mesh.h;
            let geo = LevelSet::corner(a, b, s);
            let spec = stab_spec(cfg, stab);
            let disc = Discretization::new(&mesh, &geo, p, quad_config(cfg, p), &spec)?;
            let sys = assemble(&disc, &problem, &spec)?;
            let raw = spectrum_or_none(&sys.matrix, cfg)?;
            let jac = spectrum_or_none(&jacobi_scale(&sys.matrix)?, cfg)?;
            let mut row = base_row(cfg, &geo.to_string(), p, stab, "", mesh.h);
            row.eta_min = Some(disc.active.eta_min());
            row.kappa_raw = raw.map(|s| s.kappa);
            row.kappa_jacobi = jac.map(|s| s.kappa);
            row.lambda_min = raw.map(|s| s.lambda_min);
            row.lambda_max = raw.map(|s| s.lambda_max);
            row.runtime_ms = elapsed_ms(cfg, start);
            Ok(row)
        })
        .collect();
    let rows = rows?;
    let mut summaries = Vec::new();
    for &stab in &stabs {
        for &p in &cfg.orders {
            for &n in &meshes {
                let sel: Vec<&StudyRow> = rows.iter().filter(|r| r.stab == stab.name() && r.p == p && r.h == Some(1.0 / n as f64)).collect();
                let pts: Vec<(f64, f64, Option<f64>)> = sel.iter().filter_map(|r| Some((1.0 / r.eta_min?, r.kappa_raw?, r.kappa_jacobi))).collect();
                let tag = format!("{} p={p} n={n}", stab.name());
                if pts.len() < sel.len() {
                    summaries.push(Summary::check(format!("{tag} positive definite"), (sel.len() - pts.len()) as f64, false, "rows with an indefinite or singular matrix"));
                }
                if pts.len() < 2 {
                    continue;
                }
                let x: Vec<f64> = pts.iter().map(|t| t.0).collect();
                let y: Vec<f64> = pts.iter().map(|t| t.1).collect();
                if let Some(fit) = fit_loglog(&x, &y) {
                    let s = if stab == StabMode::None {
                        let target = 2.0 * p as f64;
                        let tol = if p == 1 { 0.3 } else { 0.5 };
                        Summary::check(format!("{tag} slope log(kappa) vs log(1/eta)"), fit.slope, (fit.slope - target).abs() <= tol, format!("expected {target} +- {tol}"))
                    } else {
                        Summary::info(format!("{tag} slope log(kappa) vs log(1/eta)"), fit.slope)
                    };
                    summaries.push(s.with_fit(fit));
                }
                if stab != StabMode::None {
                    let r = ratio(&y);
                    summaries.push(Summary::check(format!("{tag} kappa max/min over eta"), r, r < 10.0, "expected < 10"));
                }
                let kj: Vec<f64> = pts.iter().filter_map(|t| t.2).collect();
                if stab == StabMode::None && p >= 2 && kj.len() == pts.len() {
                    // sweep order runs towards smaller eta
                    let mut order: Vec<usize> = (0..pts.len()).collect();
                    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
                    let grows = order.windows(2).all(|w| kj[w[1]] > kj[w[0]]);
                    summaries.push(Summary::check(format!("{tag} Jacobi-scaled kappa grows as eta shrinks"), kj[order[order.len() - 1]] / kj[order[0]], grows, "monotone"));
                }
            }
            if meshes.len() >= 3 {
                for &eta in &etas {
                    let sel: Vec<&StudyRow> = rows.iter().filter(|r| r.stab == stab.name() && r.p == p && (r.eta_min.is_some()) && eta_matches(r, eta, a, b)).collect();
                    let pts: Vec<(f64, f64)> = sel.iter().filter_map(|r| Some((1.0 / r.h?, r.kappa_raw?))).collect();
                    if pts.len() < 3 {
                        continue;
                    }
                    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
                    if let Some(fit) = fit_loglog(&x, &y) {
                        let tag = format!("{} p={p} eta={eta:.3e} slope log(kappa) vs log(1/h)", stab.name());
                        let s = if stab == StabMode::None {
                            Summary::info(tag, fit.slope)
                        } else {
                            Summary::check(tag, fit.slope, (fit.slope - 2.0).abs() <= 0.3, "expected 2 +- 0.3")
                        };
                        summaries.push(s.with_fit(fit));
                    }
                }
            }
        }
    }
    Ok(StudyOutput { rows, summaries })
}

/// Whether a conditioning row was produced for sweep value `eta`; the
/// geometry literal records `s = sqrt(eta) h`.
fn eta_matches(r: &StudyRow, eta: f64, a: f64, b: f64) -> bool {
    let h = r.h.unwrap_or(0.0);
    r.geometry == LevelSet::corner(a, b, eta.sqrt() * h).to_string()
}

/// Manufactured-solution errors over a sequence of meshes.
pub fn run_convergence(cfg: &StudyConfig) -> Result<StudyOutput, StudyError> {
    let (lit, geo) = geometry(cfg, "circle:0.5,0.5,0.3")?;
    let meshes = cfg.meshes.clone().unwrap_or_else(|| vec![8, 16, 32, 64]);
    let stabs = cfg.stabs.clone().unwrap_or_else(|| vec![StabMode::GhostFace]);
    let precond = cfg.preconds.as_ref().and_then(|p| p.first().copied()).unwrap_or(PrecondKind::Jacobi);
    let solution = manufactured(cfg, "sinsin")?;
    let problem = ProblemSpec::new(solution.clone(), cfg.cut_bc.unwrap_or(CutBc::Dirichlet));
    let tol = cfg.tol.unwrap_or(1e-10);
    let mut cases = Vec::new();
    for &stab in &stabs {
        for &p in &cfg.orders {
            for &n in &meshes {
                cases.push((stab, p, n));
            }
        }
    }
    let rows: Result<Vec<StudyRow>, StudyError> = cases
        .par_iter()
        .map(|&(stab, p, n)| {
            let start = Instant::now();
            let mesh = unit_mesh(n)?;
            let spec = stab_spec(cfg, stab);
            let disc = Discretization::new(&mesh, &geo, p, quad_config(cfg, p), &spec)?;
            let sys = assemble(&disc, &problem, &spec)?;
            let (x, report) = solve_system(&disc, &sys, precond, cfg, tol)?;
            let u = sys.expand(&x);
            let err = error_norms(&disc, &sys, &u, &problem);
            let mut row = base_row(cfg, &lit, p, stab, precond.name(), mesh.h);
            row.eta_min = Some(disc.active.eta_min());
            row.energy_err = Some(err.energy_h);
            row.l2_err = Some(err.l2);
            row.iters = Some(report.iterations);
            row.residual = Some(report.residual);
            row.runtime_ms = elapsed_ms(cfg, start);
            Ok(row)
        })
        .collect();
    let rows = rows?;
    let mut summaries = Vec::new();
    let polynomial = matches!(solution, Manufactured::Xy | Manufactured::Zero) || matches!(solution, Manufactured::X2MinusY2);
    for &stab in &stabs {
        for &p in &cfg.orders {
            let sel: Vec<&StudyRow> = rows.iter().filter(|r| r.stab == stab.name() && r.p == p).collect();
            let tag = format!("{} p={p}", stab.name());
            let reproduced = match solution {
                Manufactured::Xy | Manufactured::Zero => true,
                Manufactured::X2MinusY2 => p >= 2,
                _ => false,
            };
            if polynomial && reproduced {
                let worst = sel.iter().filter_map(|r| r.energy_err).fold(0.0, f64::max);
                summaries.push(Summary::check(format!("{tag} patch test energy error"), worst, worst < 1e-7, "expected < 1e-7"));
                continue;
            }
            let h: Vec<f64> = sel.iter().filter_map(|r| r.h).collect();
            let e: Vec<f64> = sel.iter().filter_map(|r| r.energy_err).collect();
            let l2: Vec<f64> = sel.iter().filter_map(|r| r.l2_err).collect();
            if let Some(fit) = fit_loglog(&h, &e) {
                let tol = if p == 1 { 0.15 } else { 0.2 };
                let s = Summary::check(format!("{tag} energy rate"), fit.slope, (fit.slope - p as f64).abs() <= tol, format!("expected {p} +- {tol}"));
                summaries.push(s.with_fit(fit));
            }
            if let Some(fit) = fit_loglog(&h, &l2) {
                summaries.push(Summary::info(format!("{tag} L2 rate"), fit.slope).with_fit(fit));
            }
        }
    }
    Ok(StudyOutput { rows, summaries })
}

/// CG iteration counts for several preconditioners over an `eta` sweep.
pub fn run_schwarz(cfg: &StudyConfig) -> Result<StudyOutput, StudyError> {
    let (a, b) = corner_vertex(cfg)?;
    let meshes = cfg.meshes.clone().unwrap_or_else(|| vec![16]);
    let stabs = cfg.stabs.clone().unwrap_or_else(|| vec![StabMode::None]);
    let preconds = cfg.preconds.clone().unwrap_or_else(|| vec![PrecondKind::None, PrecondKind::Jacobi, PrecondKind::Additive, PrecondKind::Multiplicative]);
    let etas = sweep(cfg, "log:1e-1:1e-8:8");
    let problem = ProblemSpec::new(manufactured(cfg, "sinsin")?, cfg.cut_bc.unwrap_or(CutBc::Neumann));
    let tol = cfg.tol.unwrap_or(1e-8);
    let mut cases = Vec::new();
    for &stab in &stabs {
        for &p in &cfg.orders {
            for &n in &meshes {
                for &pc in &preconds {
                    for &eta in &etas {
                        cases.push((stab, p, n, pc, eta));
                    }
                }
            }
        }
    }
    let rows: Result<Vec<(StudyRow, bool)>, StudyError> = cases
        .par_iter()
        .map(|&(stab, p, n, pc, eta)| {
            let start = Instant::now();
            let mesh = unit_mesh(n)?;
            let geo = LevelSet::corner(a, b, eta.sqrt() * mesh.h);
            let spec = stab_spec(cfg, stab);
            let disc = Discretization::new(&mesh, &geo, p, quad_config(cfg, p), &spec)?;
            let sys = assemble(&disc, &problem, &spec)?;
            let mut row = base_row(cfg, &geo.to_string(), p, stab, pc.name(), mesh.h);
            row.eta_min = Some(disc.active.eta_min());
            let converged = match solve_system(&disc, &sys, pc, cfg, tol) {
                Ok((_, report)) => {
                    row.iters = Some(report.iterations);
                    row.residual = Some(report.residual);
                    report.converged
                }
                // a breakdown in finite precision counts as a failed run
                Err(StudyError::Solver(SolverError::NotSpd)) => false,
                Err(e) => return Err(e),
            };
            row.runtime_ms = elapsed_ms(cfg, start);
            Ok((row, converged))
        })
        .collect();
    let tagged = rows?;
    let mut summaries = Vec::new();
    for &stab in &stabs {
        for &p in &cfg.orders {
            for &pc in &preconds {
                let mut per_mesh = Vec::new();
                for &n in &meshes {
                    let sel: Vec<&(StudyRow, bool)> = tagged.iter().filter(|(r, _)| r.stab == stab.name() && r.p == p && r.precond == pc.name() && r.h == Some(1.0 / n as f64)).collect();
                    let tag = format!("{} p={p} n={n} {}", stab.name(), pc.name());
                    let all_converged = sel.iter().all(|(_, c)| *c);
                    let its: Vec<f64> = sel.iter().map(|(r, _)| r.iters.unwrap_or(usize::MAX) as f64).collect();
                    match pc {
                        PrecondKind::Additive | PrecondKind::Multiplicative => {
                            let r = if all_converged { ratio(&its) } else { f64::INFINITY };
                            summaries.push(Summary::check(format!("{tag} iterations max/min over eta"), r, r < 2.0, "expected < 2"));
                        }
                        PrecondKind::None if stab == StabMode::None && sel.len() >= 2 => {
                            let last = sel[sel.len() - 1];
                            let grew = !last.1 || its[its.len() - 1] > 3.0 * its[0];
                            let value = if last.1 { its[its.len() - 1] / its[0] } else { f64::INFINITY };
                            summaries.push(Summary::check(format!("{tag} iterations smallest/largest eta"), value, grew, "expected > 3 or no convergence"));
                        }
                        _ => summaries.push(Summary::info(format!("{tag} iterations max/min over eta"), ratio(&its))),
                    }
                    per_mesh.push((n, its, all_converged));
                }
                if pc == PrecondKind::Additive && per_mesh.len() >= 2 && per_mesh.iter().all(|m| m.2) {
                    let mut factors = Vec::new();
                    for w in per_mesh.windows(2) {
                        let halvings = ((w[1].0 as f64) / (w[0].0 as f64)).log2();
                        for (a, b) in w[0].1.iter().zip(&w[1].1) {
                            factors.push((b / a).powf(1.0 / halvings));
                        }
                    }
                    let mean = factors.iter().sum::<f64>() / factors.len() as f64;
                    summaries.push(Summary::check(format!("{} p={p} as iteration growth per h halving", stab.name()), mean, (1.0..=3.0).contains(&mean), "expected about 2 (+-50%)"));
                }
            }
        }
    }
    Ok(StudyOutput { rows: tagged.into_iter().map(|(r, _)| r).collect(), summaries })
}

/// Constants of the stability analysis for one discretization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlConstants {
    /// `min (‖∇v‖²_Ω + s_h(v,v)) / ‖∇v‖²_{Ω_h}` over the discrete space modulo constants.
    pub extended: f64,
    /// `max s_h(v,v) / ‖∇v‖²_{Ω_h}`, when a ghost penalty is present.
    pub inverse: Option<f64>,
}

/// Generalized Rayleigh extrema against the gradient mass on `Ω_h`.
///
/// For aggregation the space is the constrained one. Constants are removed
/// by pinning the last unknown, which leaves every quotient unchanged.
pub fn extended_control(disc: &Discretization<f64>, stab: &StabilizationSpec<f64>) -> Result<ControlConstants, StudyError> {
    let k_omega = stiffness_physical(disc);
    let k_h = stiffness_active(disc);
    let s = stabilization_matrix(disc, stab);
    let num = match &s {
        Some(s) => k_omega.add(s),
        None => k_omega,
    };
    let basis: Option<DenseMatrix<f64>> = match (stab.mode, &disc.constraints) {
        (StabMode::Agfem, Some(cs)) => {
            let mut c = DenseMatrix::zeros(cs.num_full(), cs.num_reduced());
            for (i, row) in cs.rows.iter().enumerate() {
                for &(k, v) in row {
                    c[(i, k)] += v;
                }
            }
            Some(c)
        }
        (StabMode::Agfem, None) => return Err(crate::assembly::AssemblyError::MissingConstraints.into()),
        _ => None,
    };
    let project = |m: &Csr<f64>| {
        let d = m.to_dense();
        let full = match &basis {
            Some(c) => c.transpose().matmul(&d).matmul(c),
            None => d,
        };
        let n = full.rows - 1;
        DenseMatrix::from_fn(n, n, |i, j| full[(i, j)])
    };
    let denom = cholesky(&project(&k_h))?;
    let extended = sym_eigen(&denom.whiten(&project(&num)), false).values[0];
    let inverse = s.as_ref().map(|s| *sym_eigen(&denom.whiten(&project(s)), false).values.last().expect("non-empty"));
    Ok(ControlConstants { extended, inverse })
}

/// Largest local Nitsche parameter over the cut elements.
fn worst_local_beta(disc: &Discretization<f64>) -> Result<Option<f64>, StudyError> {
    let mut worst: Option<f64> = None;
    for &e in &disc.active.cut {
        let Some(q) = &disc.quads[e] else { continue };
        if q.boundary.is_empty() {
            continue;
        }
        let b = nitsche_parameter_local(&disc.space, e, q)?;
        worst = Some(worst.map_or(b, |w| w.max(b)));
    }
    Ok(worst)
}

/// Local Nitsche parameters and extended-control constants over a sweep of
/// cut offsets `delta`.
pub fn run_stability(cfg: &StudyConfig) -> Result<StudyOutput, StudyError> {
    let (_, base) = geometry(cfg, "plane:1,0,0.5")?;
    let LevelSet::Plane { normal, offset } = base else {
        return Err(StudyError::Config("the stability study shifts a plane (plane:nx,ny,c) by delta h".into()));
    };
    let meshes = cfg.meshes.clone().unwrap_or_else(|| vec![8]);
    let stabs = cfg.stabs.clone().unwrap_or_else(|| vec![StabMode::None, StabMode::GhostFace, StabMode::Agfem]);
    let deltas = sweep(cfg, "log:1e-1:1e-8:8");
    let mut cases = Vec::new();
    for &stab in &stabs {
        for &p in &cfg.orders {
            for &n in &meshes {
                for &d in &deltas {
                    cases.push((stab, p, n, d));
                }
            }
        }
    }
    let rows: Result<Vec<StudyRow>, StudyError> = cases
        .par_iter()
        .map(|&(stab, p, n, d)| {
            let start = Instant::now();
            let mesh = unit_mesh(n)?;
            let geo = LevelSet::plane(normal[0], normal[1], offset + d * mesh.h).map_err(|e| StudyError::Config(e.to_string()))?;
            let mut spec = stab_spec(cfg, stab);
            spec.beta_mode = BetaMode::Local;
            let disc = Discretization::new(&mesh, &geo, p, quad_config(cfg, p), &spec)?;
            let c = extended_control(&disc, &spec)?;
            let mut row = base_row(cfg, &geo.to_string(), p, stab, "", mesh.h);
            row.eta_min = Some(disc.active.eta_min());
            row.kappa_raw = worst_local_beta(&disc)?;
            row.lambda_min = Some(c.extended);
            row.lambda_max = c.inverse;
            row.runtime_ms = elapsed_ms(cfg, start);
            Ok(row)
        })
        .collect();
    let rows = rows?;
    let mut summaries = Vec::new();
    for &stab in &stabs {
        for &p in &cfg.orders {
            for &n in &meshes {
                let sel: Vec<&StudyRow> = rows.iter().filter(|r| r.stab == stab.name() && r.p == p && r.h == Some(1.0 / n as f64)).collect();
                if sel.len() < 2 {
                    continue;
                }
                let tag = format!("{} p={p} n={n}", stab.name());
                let ext: Vec<f64> = sel.iter().filter_map(|r| r.lambda_min).collect();
                let r = ratio(&ext);
                if stab == StabMode::None {
                    let degrade = ext[0] / ext[ext.len() - 1];
                    summaries.push(Summary::check(format!("{tag} extended control first/last delta"), degrade, degrade > 1e3, "expected > 1e3"));
                    let betas: Vec<f64> = sel.iter().filter_map(|r| r.kappa_raw).collect();
                    let grows = betas.len() == sel.len() && betas.windows(2).all(|w| w[1] > w[0]);
                    summaries.push(Summary::check(format!("{tag} local beta grows as delta shrinks"), betas.last().copied().unwrap_or(f64::NAN) / betas[0], grows, "monotone"));
                } else {
                    summaries.push(Summary::check(format!("{tag} extended control max/min over delta"), r, r < 2.0, "expected < 2"));
                    let inv: Vec<f64> = sel.iter().filter_map(|r| r.lambda_max).collect();
                    if inv.len() == sel.len() {
                        let ri = ratio(&inv);
                        summaries.push(Summary::check(format!("{tag} inverse bound max/min over delta"), ri, ri < 2.0, "expected < 2"));
                    }
                }
            }
        }
    }
    Ok(StudyOutput { rows, summaries })
}

/// One solve per mesh, order, stabilization and preconditioner.
pub fn run_solve(cfg: &StudyConfig) -> Result<StudyOutput, StudyError> {
    let (lit, geo) = geometry(cfg, "circle:0.5,0.5,0.3")?;
    let meshes = cfg.meshes.clone().unwrap_or_else(|| vec![16]);
    let stabs = cfg.stabs.clone().unwrap_or_else(|| vec![StabMode::GhostFace]);
    let preconds = cfg.preconds.clone().unwrap_or_else(|| vec![PrecondKind::Jacobi]);
    let problem = ProblemSpec::new(manufactured(cfg, "sinsin")?, cfg.cut_bc.unwrap_or(CutBc::Dirichlet));
    let tol = cfg.tol.unwrap_or(1e-8);
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &stab in &stabs {
        for &p in &cfg.orders {
            for &n in &meshes {
                let start = Instant::now();
                let mesh = unit_mesh(n)?;
                let spec = stab_spec(cfg, stab);
                let disc = Discretization::new(&mesh, &geo, p, quad_config(cfg, p), &spec)?;
                let sys = assemble(&disc, &problem, &spec)?;
                for &pc in &preconds {
                    let t = Instant::now();
                    let (x, report) = solve_system(&disc, &sys, pc, cfg, tol)?;
                    let err = error_norms(&disc, &sys, &sys.expand(&x), &problem);
                    let mut row = base_row(cfg, &lit, p, stab, pc.name(), mesh.h);
                    row.eta_min = Some(disc.active.eta_min());
                    row.energy_err = Some(err.energy_h);
                    row.l2_err = Some(err.l2);
                    row.iters = Some(report.iterations);
                    row.residual = Some(report.residual);
                    row.runtime_ms = cfg.timing.then(|| (start.elapsed() - t.elapsed() + report.elapsed).as_secs_f64() * 1e3);
                    summaries.push(Summary::check(format!("{} p={p} n={n} {} converged", stab.name(), pc.name()), report.iterations as f64, report.converged, "iterations"));
                    rows.push(row);
                }
            }
        }
    }
    Ok(StudyOutput { rows, summaries })
}
