//! Nitsche forms, ghost penalties, strong Dirichlet elimination and the
//! aggregated reduction, assembled into sparse systems.

mod ghost;
mod nitsche;
mod norms;
mod problem;

pub use ghost::{ghost_element_value, ghost_face_value, ghost_penalty_element, ghost_penalty_face, ElementGhost};
pub use nitsche::nitsche_parameter_local;
pub use norms::{energy_star, error_norms, function_norms, operator_energy_quadrature, operator_norm, NormSet};
pub use problem::{BetaMode, BoxBc, CutBc, Manufactured, ProblemSpec, StabMode, StabilizationSpec};

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{classify_elements, ActiveMesh, BackgroundMesh, ElementClass, GeometryError, LevelSet};
use crate::quadrature::{box_face_rule, box_sides, build_quadratures, CutQuadrature, QuadConfig};
use crate::scalar::{dot, Real};
use crate::solvers::Csr;
use crate::spaces::{aggregate, build_constraints, build_space, classify_dofs, values_and_gradients, AggregateMap, ConstraintSet, FeSpace, SpaceError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("degenerate cut in element {0}")]
    DegenerateCut(usize),
    #[error("missing cut quadrature for element {0}")]
    MissingQuadrature(usize),
    #[error("aggregated stabilization requested without constraints")]
    MissingConstraints,
}

/// Everything that depends on geometry and discretization but not on the
/// forms: active mesh, space, element quadratures and, for the aggregated
/// method, the extension constraints.
#[derive(Clone, Debug)]
pub struct Discretization<T> {
    pub active: ActiveMesh<T>,
    pub space: FeSpace<T>,
    pub quads: Vec<Option<CutQuadrature<T>>>,
    pub quad_cfg: QuadConfig,
    pub aggregates: Option<AggregateMap<T>>,
    pub constraints: Option<ConstraintSet<T>>,
}

impl<T: Real> Discretization<T> {
    pub fn new(mesh: &BackgroundMesh<T>, geo: &LevelSet<T>, p: usize, quad_cfg: QuadConfig, stab: &StabilizationSpec<T>) -> Result<Self, AssemblyError> {
        let active = classify_elements(mesh, geo, &quad_cfg)?;
        let space = build_space(&active, p)?;
        let quads = build_quadratures(&active, &quad_cfg);
        let (aggregates, constraints) = if stab.mode == StabMode::Agfem {
            let agg = aggregate(&active, stab.eta_star)?;
            let cls = classify_dofs(&space, &agg);
            let cs = build_constraints(&space, &agg, &cls, stab.max_chain)?;
            (Some(agg), Some(cs))
        } else {
            (None, None)
        };
        Ok(Self { active, space, quads, quad_cfg, aggregates, constraints })
    }
}

/// Affine expansion from system unknowns to full coefficients:
/// `u_i = Σ_k c_ik x_k + g_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap<T> {
    pub rows: Vec<Vec<(usize, T)>>,
    pub shift: Vec<T>,
    pub num_free: usize,
}

impl<T: Real> DofMap<T> {
    pub fn identity(n: usize) -> Self {
        Self { rows: (0..n).map(|i| vec![(i, T::one())]).collect(), shift: vec![T::zero(); n], num_free: n }
    }

    pub fn expand(&self, x: &[T]) -> Vec<T> {
        self.rows.iter().zip(&self.shift).map(|(row, &g)| g + row.iter().map(|&(k, c)| c * x[k]).sum::<T>()).collect()
    }

    /// `C^T A C` for the linear part `C`.
    pub fn reduce_matrix(&self, a: &Csr<T>) -> Csr<T> {
        let mut t = Vec::new();
        for i in 0..a.rows {
            if self.rows[i].is_empty() {
                continue;
            }
            for (j, v) in a.row(i) {
                for &(k, ci) in &self.rows[i] {
                    for &(l, cj) in &self.rows[j] {
                        t.push((k, l, ci * cj * v));
                    }
                }
            }
        }
        Csr::from_triplets(self.num_free, self.num_free, t)
    }

    /// `C^T (b - A g)`.
    pub fn reduce_rhs(&self, a: &Csr<T>, b: &[T]) -> Vec<T> {
        let ag = a.matvec(&self.shift);
        let mut out = vec![T::zero(); self.num_free];
        for (i, row) in self.rows.iter().enumerate() {
            for &(k, c) in row {
                out[k] += c * (b[i] - ag[i]);
            }
        }
        out
    }
}

/// Assembled system with everything needed to interpret its solution.
#[derive(Clone, Debug)]
pub struct SparseSystem<T> {
    /// Reduced matrix on the free unknowns.
    pub matrix: Csr<T>,
    pub rhs: Vec<T>,
    pub map: DofMap<T>,
    /// `a_h + s_h` on the full space, before elimination and constraints.
    pub full_matrix: Csr<T>,
    pub full_rhs: Vec<T>,
    /// The `s_h` part alone, for ghost modes.
    pub stabilization: Option<Csr<T>>,
    /// Nitsche parameter per background element, zero where unused.
    pub beta: Vec<T>,
}

impl<T: Real> SparseSystem<T> {
    pub fn expand(&self, x: &[T]) -> Vec<T> {
        self.map.expand(x)
    }
}

struct Local<T> {
    dofs: Vec<usize>,
    k: Vec<T>,
    f: Vec<T>,
    beta: T,
}

fn element_local<T: Real>(disc: &Discretization<T>, e: usize, problem: &ProblemSpec<T>, stab: &StabilizationSpec<T>) -> Result<Local<T>, AssemblyError> {
    let space = &disc.space;
    let q = disc.quads[e].as_ref().ok_or(AssemblyError::MissingQuadrature(e))?;
    let h = space.mesh.h;
    let nl = (space.p + 1) * (space.p + 1);
    let mut k = vec![T::zero(); nl * nl];
    let mut f = vec![T::zero(); nl];
    let (mut vals, mut grads) = (Vec::new(), Vec::new());
    let sol = &problem.solution;
    for (&x, &w) in q.bulk.points.iter().zip(&q.bulk.weights) {
        values_and_gradients(space.p, space.to_reference(e, x), &mut vals, &mut grads);
        let src = sol.source(x);
        for a in 0..nl {
            f[a] += w * src * vals[a];
            for b in 0..nl {
                k[a * nl + b] += w * dot(grads[a], grads[b]) / (h * h);
            }
        }
    }
    let mut beta = T::zero();
    if !q.boundary.is_empty() {
        match problem.cut_bc {
            CutBc::Dirichlet => {
                beta = match stab.beta_mode {
                    BetaMode::Global => stab.beta_c / h,
                    BetaMode::Local => nitsche_parameter_local(space, e, q)?,
                };
                for ((&x, &w), &n) in q.boundary.points.iter().zip(&q.boundary.weights).zip(&q.boundary.normals) {
                    values_and_gradients(space.p, space.to_reference(e, x), &mut vals, &mut grads);
                    let dn: Vec<T> = grads.iter().map(|g| dot(*g, n) / h).collect();
                    let g = sol.u(x);
                    for a in 0..nl {
                        f[a] += w * (beta * g * vals[a] - g * dn[a]);
                        for b in 0..nl {
                            k[a * nl + b] += w * (beta * vals[a] * vals[b] - vals[a] * dn[b] - dn[a] * vals[b]);
                        }
                    }
                }
            }
            CutBc::Neumann => {
                for ((&x, &w), &n) in q.boundary.points.iter().zip(&q.boundary.weights).zip(&q.boundary.normals) {
                    values_and_gradients(space.p, space.to_reference(e, x), &mut vals, &mut grads);
                    let gn = dot(sol.grad(x), n);
                    for a in 0..nl {
                        f[a] += w * gn * vals[a];
                    }
                }
            }
        }
    }
    if problem.box_bc == BoxBc::Neumann {
        let geo = &disc.active.level_set;
        for side in box_sides(&space.mesh, e) {
            let rule = box_face_rule(&space.mesh, e, side, geo, &disc.quad_cfg);
            for ((&x, &w), &n) in rule.points.iter().zip(&rule.weights).zip(&rule.normals) {
                values_and_gradients(space.p, space.to_reference(e, x), &mut vals, &mut grads);
                let gn = dot(sol.grad(x), n);
                for a in 0..nl {
                    f[a] += w * gn * vals[a];
                }
            }
        }
    }
    Ok(Local { dofs: space.dofs(e).to_vec(), k, f, beta })
}

/// Affine map eliminating box-boundary DOFs (for strong Dirichlet sides)
/// and expressing ill-posed DOFs through their constraints.
pub fn dof_map<T: Real>(disc: &Discretization<T>, problem: &ProblemSpec<T>, stab: &StabilizationSpec<T>) -> Result<DofMap<T>, AssemblyError> {
    let space = &disc.space;
    let n = space.num_dofs();
    let fixed: Vec<bool> = (0..n).map(|d| problem.box_bc == BoxBc::StrongDirichlet && space.on_box_boundary(d)).collect();
    let shift_of = |d: usize| if fixed[d] { problem.solution.u(space.coords[d]) } else { T::zero() };
    match stab.mode {
        StabMode::Agfem => {
            let cs = disc.constraints.as_ref().ok_or(AssemblyError::MissingConstraints)?;
            // free numbering over well-posed DOFs that are not fixed
            let mut free = vec![None; cs.num_reduced()];
            let mut num_free = 0;
            for (k, &d) in cs.wp_dofs.iter().enumerate() {
                if !fixed[d] {
                    free[k] = Some(num_free);
                    num_free += 1;
                }
            }
            let mut rows = Vec::with_capacity(n);
            let mut shift = Vec::with_capacity(n);
            for d in 0..n {
                if fixed[d] {
                    rows.push(Vec::new());
                    shift.push(shift_of(d));
                    continue;
                }
                let mut row = Vec::new();
                let mut g = T::zero();
                for &(k, c) in &cs.rows[d] {
                    match free[k] {
                        Some(f) => row.push((f, c)),
                        None => g += c * shift_of(cs.wp_dofs[k]),
                    }
                }
                rows.push(row);
                shift.push(g);
            }
            Ok(DofMap { rows, shift, num_free })
        }
        _ => {
            let mut rows = Vec::with_capacity(n);
            let mut num_free = 0;
            for d in 0..n {
                if fixed[d] {
                    rows.push(Vec::new());
                } else {
                    rows.push(vec![(num_free, T::one())]);
                    num_free += 1;
                }
            }
            Ok(DofMap { rows, shift: (0..n).map(shift_of).collect(), num_free })
        }
    }
}

/// Stabilization matrix on the full space for the ghost modes.
pub fn stabilization_matrix<T: Real>(disc: &Discretization<T>, stab: &StabilizationSpec<T>) -> Option<Csr<T>> {
    let faces = &disc.active.ghost_faces;
    match stab.mode {
        StabMode::GhostFace => Some(ghost_penalty_face(&disc.space, faces, &stab.tau, stab.neumann_scaling)),
        StabMode::GhostElemS0 => Some(ghost_penalty_element(&disc.space, faces, stab.tau_for(1), ElementGhost::S0)),
        StabMode::GhostElemS1 => Some(ghost_penalty_element(&disc.space, faces, stab.tau_for(1), ElementGhost::S1)),
        _ => None,
    }
}

/// Assembles `a_h + s_h` and `l_h + (f, v)`, then eliminates strong
/// Dirichlet DOFs and applies the aggregation constraints.
pub fn assemble<T: Real>(disc: &Discretization<T>, problem: &ProblemSpec<T>, stab: &StabilizationSpec<T>) -> Result<SparseSystem<T>, AssemblyError> {
    let n = disc.space.num_dofs();
    let ne = disc.space.mesh.num_elements();
    for &e in &disc.active.cut {
        if disc.quads[e].is_none() {
            return Err(AssemblyError::MissingQuadrature(e));
        }
    }
    let locals: Result<Vec<Local<T>>, AssemblyError> = disc.active.active.par_iter().map(|&e| element_local(disc, e, problem, stab)).collect();
    let locals = locals?;
    let mut triplets = Vec::new();
    let mut rhs = vec![T::zero(); n];
    let mut beta = vec![T::zero(); ne];
    for (loc, &e) in locals.iter().zip(&disc.active.active) {
        let nl = loc.dofs.len();
        for a in 0..nl {
            rhs[loc.dofs[a]] += loc.f[a];
            for b in 0..nl {
                triplets.push((loc.dofs[a], loc.dofs[b], loc.k[a * nl + b]));
            }
        }
        beta[e] = loc.beta;
    }
    let stabilization = stabilization_matrix(disc, stab);
    if let Some(s) = &stabilization {
        triplets.extend(s.triplets());
    }
    let full_matrix = Csr::from_triplets(n, n, triplets);
    let map = dof_map(disc, problem, stab)?;
    let matrix = map.reduce_matrix(&full_matrix);
    let reduced_rhs = map.reduce_rhs(&full_matrix, &rhs);
    Ok(SparseSystem { matrix, rhs: reduced_rhs, map, full_matrix, full_rhs: rhs, stabilization, beta })
}

/// Gradient mass `∫_Ω ∇φ_i·∇φ_j` on the physical domain.
pub fn stiffness_physical<T: Real>(disc: &Discretization<T>) -> Csr<T> {
    let space = &disc.space;
    let n = space.num_dofs();
    let h = space.mesh.h;
    let mut t = Vec::new();
    let (mut vals, mut grads) = (Vec::new(), Vec::new());
    for &e in &disc.active.active {
        let Some(q) = &disc.quads[e] else { continue };
        let dofs = space.dofs(e);
        for (&x, &w) in q.bulk.points.iter().zip(&q.bulk.weights) {
            values_and_gradients(space.p, space.to_reference(e, x), &mut vals, &mut grads);
            for (a, &da) in dofs.iter().enumerate() {
                for (b, &db) in dofs.iter().enumerate() {
                    t.push((da, db, w * dot(grads[a], grads[b]) / (h * h)));
                }
            }
        }
    }
    Csr::from_triplets(n, n, t)
}

/// Gradient mass on the full active domain `Ω_h` (uncut elements).
pub fn stiffness_active<T: Real>(disc: &Discretization<T>) -> Csr<T> {
    let space = &disc.space;
    let n = space.num_dofs();
    // the gradient mass of a full square element does not depend on h
    let rule = crate::quadrature::gauss_legendre::<T>(space.p + 1).expect("order within range");
    let mut t = Vec::new();
    let (mut vals, mut grads) = (Vec::new(), Vec::new());
    for &e in &disc.active.active {
        let dofs = space.dofs(e);
        for (&yq, &wy) in rule.points.iter().zip(&rule.weights) {
            for (&xq, &wx) in rule.points.iter().zip(&rule.weights) {
                values_and_gradients(space.p, [xq, yq], &mut vals, &mut grads);
                let w = wx * wy;
                for (a, &da) in dofs.iter().enumerate() {
                    for (b, &db) in dofs.iter().enumerate() {
                        t.push((da, db, w * dot(grads[a], grads[b])));
                    }
                }
            }
        }
    }
    Csr::from_triplets(n, n, t)
}

/// Whether every cut element has been given a quadrature.
pub fn is_complete<T: Real>(disc: &Discretization<T>) -> bool {
    disc.active.class.iter().zip(&disc.quads).all(|(c, q)| (*c == ElementClass::Exterior) == q.is_none())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{cholesky, sym_eigen};
    use crate::spaces::interpolate;

    fn unit(n: usize) -> BackgroundMesh<f64> {
        BackgroundMesh::unit_square(n).unwrap()
    }

    fn solve_dense(sys: &SparseSystem<f64>) -> Vec<f64> {
        let x = cholesky(&sys.matrix.to_dense()).unwrap().solve(&sys.rhs);
        sys.expand(&x)
    }

    fn stab_for(mode: StabMode) -> StabilizationSpec<f64> {
        StabilizationSpec::new(mode)
    }

    const MODES: [StabMode; 5] = [StabMode::None, StabMode::GhostFace, StabMode::GhostElemS0, StabMode::GhostElemS1, StabMode::Agfem];

    #[test]
    fn patch_tests_reproduce_polynomials() {
        for (p, sol) in [(1, Manufactured::Xy), (2, Manufactured::X2MinusY2)] {
            for mode in MODES {
                for cut_bc in [CutBc::Dirichlet, CutBc::Neumann] {
                    // a Neumann cut needs some fixed box nodes to pin the constant
                    let geo = match cut_bc {
                        CutBc::Dirichlet => LevelSet::circle(0.5, 0.5, 0.31),
                        CutBc::Neumann => LevelSet::circle(0.0, 0.0, 0.73),
                    };
                    let stab = stab_for(mode);
                    let disc = Discretization::new(&unit(8), &geo, p, QuadConfig::new(p), &stab).unwrap();
                    let problem = ProblemSpec::new(sol.clone(), cut_bc);
                    let sys = assemble(&disc, &problem, &stab).unwrap();
                    let u = solve_dense(&sys);
                    let exact = interpolate(&disc.space, |x| problem.solution.u(x));
                    // without stabilization the fictitious nodes of tiny cuts are
                    // determined only up to round-off, so only the energy is checked
                    if mode != StabMode::None {
                        let err = u.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                        assert!(err < 1e-8, "p={p} {mode:?} {cut_bc:?}: {err}");
                    }
                    let e = error_norms(&disc, &sys, &u, &problem);
                    assert!(e.energy_h < 1e-7, "{mode:?}: {}", e.energy_h);
                }
            }
        }
    }

    fn corner_hat(p: usize, eta: f64) -> f64 {
        // the corner element sits at the upper right of a 2x2 patch
        let h = 1.0;
        let mesh = BackgroundMesh::new([0.0, 0.0], [2.0 * h, 2.0 * h], 2, 2).unwrap();
        let geo = LevelSet::corner(h, h, eta.sqrt() * h);
        let stab = stab_for(StabMode::None);
        let disc = Discretization::new(&mesh, &geo, p, QuadConfig::new(p).with_depth(8), &stab).unwrap();
        let sys = assemble(&disc, &ProblemSpec::new(Manufactured::Zero, CutBc::Neumann), &stab).unwrap();
        // (xi_1 xi_2 / h^2)^p on the corner element, zero elsewhere
        let v = interpolate(&disc.space, |x| ((x[0] - h).max(0.0) * (x[1] - h).max(0.0) / (h * h)).powi(p as i32));
        sys.full_matrix.quadratic_form(&v)
    }

    #[test]
    fn small_function_operator_norm() {
        for eta in [0.25, 1.0 / 16.0, 1.0 / 64.0] {
            let expected = 2.0 / 3.0 * eta * eta;
            assert!((corner_hat(1, eta) - expected).abs() < 1e-2 * expected);
            let expected2 = 8.0 / 15.0 * eta.powi(4);
            assert!((corner_hat(2, eta) - expected2).abs() < 1e-2 * expected2);
        }
    }

    #[test]
    fn zero_data_gives_zero_system() {
        let geo = LevelSet::circle(0.5, 0.5, 0.3);
        for mode in MODES {
            let stab = stab_for(mode);
            let disc = Discretization::new(&unit(8), &geo, 1, QuadConfig::new(1), &stab).unwrap();
            let sys = assemble(&disc, &ProblemSpec::new(Manufactured::Zero, CutBc::Dirichlet), &stab).unwrap();
            assert!(sys.rhs.iter().all(|&b| b == 0.0));
            assert!(solve_dense(&sys).iter().all(|&u| u == 0.0));
        }
    }

    #[test]
    fn matrices_are_symmetric() {
        let geo = LevelSet::annulus(0.5, 0.5, 0.15, 0.4);
        for p in 1..=2 {
            for mode in MODES {
                let stab = stab_for(mode);
                let disc = Discretization::new(&unit(8), &geo, p, QuadConfig::new(p), &stab).unwrap();
                let sys = assemble(&disc, &ProblemSpec::new(Manufactured::SinSin, CutBc::Dirichlet), &stab).unwrap();
                assert!(sys.matrix.asymmetry() <= 1e-12 * sys.matrix.max_abs());
                assert!(sys.full_matrix.asymmetry() <= 1e-12 * sys.full_matrix.max_abs());
            }
        }
    }

    fn min_eigenvalue(stab: &StabilizationSpec<f64>, delta: f64, p: usize) -> f64 {
        let h = 1.0 / 8.0;
        let geo = LevelSet::plane(1.0, 0.0, 0.5 + delta * h).unwrap();
        let disc = Discretization::new(&unit(8), &geo, p, QuadConfig::new(p), stab).unwrap();
        let sys = assemble(&disc, &ProblemSpec::new(Manufactured::Zero, CutBc::Dirichlet), stab).unwrap();
        // through the Cholesky inverse, which resolves tiny eigenvalues of graded matrices
        match crate::solvers::condition_number(&sys.matrix, crate::solvers::CondMethod::Dense) {
            Ok(s) => s.lambda_min,
            Err(_) => sym_eigen(&sys.matrix.to_dense(), false).values[0],
        }
    }

    #[test]
    fn coercive_across_cut_offsets() {
        let deltas: Vec<f64> = (1..=8).map(|k| 10f64.powi(-k)).collect();
        let mut agfem = stab_for(StabMode::Agfem);
        agfem.beta_mode = BetaMode::Global;
        for &d in &deltas {
            assert!(min_eigenvalue(&agfem, d, 1) > 0.0, "agfem {d}");
        }
        // On a sliver the face penalty and the Nitsche term balance when
        // tau * c_beta = 1, so the default pair sits on the edge.
        let mut ghost = stab_for(StabMode::GhostFace);
        ghost.beta_mode = BetaMode::Global;
        let edge: Vec<f64> = deltas.iter().map(|&d| min_eigenvalue(&ghost, d, 1)).collect();
        assert!(edge[0] > 0.0 && edge[7].abs() < 1e-2, "{edge:?}");
        ghost.beta_c = 20.0;
        for &d in &deltas {
            assert!(min_eigenvalue(&ghost, d, 1) > 0.0, "ghost-face {d}");
        }
        let stab = stab_for(StabMode::None);
        assert_eq!(stab.beta_mode, BetaMode::Local);
        let mins: Vec<f64> = deltas.iter().map(|&d| min_eigenvalue(&stab, d, 1)).collect();
        assert!(mins.iter().all(|&m| m > 0.0), "{mins:?}");
        assert!(mins[7] < 1e-3 * mins[0], "{mins:?}");
    }

    #[test]
    fn operator_norm_matches_quadrature() {
        let geo = LevelSet::circle(0.45, 0.52, 0.33);
        for p in 1..=2 {
            for mode in MODES {
                for cut_bc in [CutBc::Dirichlet, CutBc::Neumann] {
                    let stab = stab_for(mode);
                    let disc = Discretization::new(&unit(8), &geo, p, QuadConfig::new(p), &stab).unwrap();
                    let problem = ProblemSpec::new(Manufactured::SinSin, cut_bc);
                    let sys = assemble(&disc, &problem, &stab).unwrap();
                    let v = interpolate(&disc.space, |x| (3.0 * x[0]).sin() * (1.0 + x[1] * x[1]));
                    let a = operator_norm(&sys, &v).powi(2);
                    let q = operator_energy_quadrature(&disc, &sys, &v, &problem);
                    assert!((a - q).abs() <= 1e-10 * a, "{p} {mode:?}: {a} {q}");
                }
            }
        }
    }

    #[test]
    fn norms_of_zero_vanish_and_star_adds_penalty() {
        let geo = LevelSet::circle(0.5, 0.5, 0.3);
        for mode in [StabMode::GhostFace, StabMode::GhostElemS0, StabMode::GhostElemS1] {
            let stab = stab_for(mode);
            let disc = Discretization::new(&unit(8), &geo, 1, QuadConfig::new(1), &stab).unwrap();
            let sys = assemble(&disc, &ProblemSpec::new(Manufactured::Zero, CutBc::Dirichlet), &stab).unwrap();
            let zero = vec![0.0; disc.space.num_dofs()];
            let n0 = function_norms(&disc, &sys, &zero, true);
            assert_eq!([n0.l2, n0.h1_semi, n0.beta, n0.energy_h, energy_star(&n0, &sys, &zero), operator_norm(&sys, &zero)], [0.0; 6]);
            let v = interpolate(&disc.space, |x| (5.0 * x[0] * x[1]).exp());
            let n = function_norms(&disc, &sys, &v, true);
            let sh = sys.stabilization.as_ref().unwrap().quadratic_form(&v);
            assert!(sh > 0.0);
            let diff = energy_star(&n, &sys, &v).powi(2) - n.energy_h.powi(2);
            assert!((diff - sh).abs() < 1e-12 * n.energy_h.powi(2));
        }
    }

    #[test]
    fn interpolation_error_halves_with_h() {
        let geo = LevelSet::circle(0.5, 0.5, 0.3);
        let stab = stab_for(StabMode::GhostFace);
        let problem = ProblemSpec::new(Manufactured::SinSin, CutBc::Dirichlet);
        let errs: Vec<f64> = [8, 16]
            .iter()
            .map(|&n| {
                let disc = Discretization::new(&unit(n), &geo, 1, QuadConfig::new(1), &stab).unwrap();
                let sys = assemble(&disc, &problem, &stab).unwrap();
                let v = interpolate(&disc.space, |x| problem.solution.u(x));
                error_norms(&disc, &sys, &v, &problem).energy_h
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!((ratio - 2.0).abs() < 0.3, "{ratio}");
    }

    #[test]
    fn serial_and_parallel_assembly_agree() {
        let geo = LevelSet::circle(0.5, 0.5, 0.37);
        let stab = stab_for(StabMode::GhostFace);
        let disc = Discretization::new(&unit(16), &geo, 2, QuadConfig::new(2), &stab).unwrap();
        let problem = ProblemSpec::new(Manufactured::SinSin, CutBc::Dirichlet);
        let par = assemble(&disc, &problem, &stab).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let ser = pool.install(|| assemble(&disc, &problem, &stab).unwrap());
        assert_eq!(par.matrix, ser.matrix);
        assert_eq!(par.rhs, ser.rhs);
    }

    #[test]
    fn missing_quadrature_is_reported() {
        let geo = LevelSet::circle(0.5, 0.5, 0.3);
        let stab = stab_for(StabMode::GhostFace);
        let mut disc = Discretization::new(&unit(8), &geo, 1, QuadConfig::new(1), &stab).unwrap();
        let e = disc.active.cut[0];
        disc.quads[e] = None;
        assert!(!is_complete(&disc));
        let err = assemble(&disc, &ProblemSpec::new(Manufactured::Zero, CutBc::Dirichlet), &stab).unwrap_err();
        assert_eq!(err, AssemblyError::MissingQuadrature(e));
    }

    #[test]
    fn agfem_requires_constraints() {
        let geo = LevelSet::circle(0.5, 0.5, 0.3);
        let disc = Discretization::new(&unit(8), &geo, 1, QuadConfig::new(1), &stab_for(StabMode::None)).unwrap();
        let err = assemble(&disc, &ProblemSpec::new(Manufactured::Zero, CutBc::Dirichlet), &stab_for(StabMode::Agfem)).unwrap_err();
        assert_eq!(err, AssemblyError::MissingConstraints);
    }
}
