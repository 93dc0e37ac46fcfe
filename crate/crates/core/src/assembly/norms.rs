use crate::quadrature::{build_quadratures, CutQuadrature};
use crate::scalar::{dot, Real, Vec2};

use super::{CutBc, Discretization, ProblemSpec, SparseSystem};

/// Norms of a function on the physical domain. The boundary terms run over
/// the cut Dirichlet boundary and vanish for a Neumann cut.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormSet<T> {
    pub l2: T,
    pub h1_semi: T,
    /// `‖∇v‖² + ‖β^{1/2} v‖² + ‖β^{-1/2} ∂_n v‖²` on `∂Ω_D`.
    pub beta: T,
    /// `‖∇v‖² + ‖h^{-1/2} v‖² + ‖h^{1/2} ∂_n v‖²` on `∂Ω_D`.
    pub energy_h: T,
}

impl<T: Real> NormSet<T> {
    fn from_squares(s: [T; 6], h: T) -> Self {
        let [l2, h1, bv, bd, v2, dn2] = s;
        NormSet { l2: l2.sqrt(), h1_semi: h1.sqrt(), beta: (h1 + bv + bd).sqrt(), energy_h: (h1 + v2 / h + dn2 * h).sqrt() }
    }
}

fn accumulate<T: Real>(
    disc: &Discretization<T>,
    quads: &[Option<CutQuadrature<T>>],
    beta: &[T],
    dirichlet: bool,
    field: impl Fn(usize, Vec2<T>) -> (T, Vec2<T>),
) -> [T; 6] {
    let mut s = [T::zero(); 6];
    for &e in &disc.active.active {
        let Some(q) = &quads[e] else { continue };
        for (&x, &w) in q.bulk.points.iter().zip(&q.bulk.weights) {
            let (v, g) = field(e, x);
            s[0] += w * v * v;
            s[1] += w * dot(g, g);
        }
        if !dirichlet {
            continue;
        }
        for ((&x, &w), &n) in q.boundary.points.iter().zip(&q.boundary.weights).zip(&q.boundary.normals) {
            let (v, g) = field(e, x);
            let dn = dot(g, n);
            let b = beta[e];
            if b > T::zero() {
                s[2] += w * b * v * v;
                s[3] += w * dn * dn / b;
            }
            s[4] += w * v * v;
            s[5] += w * dn * dn;
        }
    }
    s
}

fn error_quads<T: Real>(disc: &Discretization<T>) -> Vec<Option<CutQuadrature<T>>> {
    build_quadratures(&disc.active, &disc.quad_cfg.with_order((disc.space.p + 3).min(20)))
}

/// Norms of the discrete function with full coefficient vector `coeffs`.
pub fn function_norms<T: Real>(disc: &Discretization<T>, sys: &SparseSystem<T>, coeffs: &[T], dirichlet: bool) -> NormSet<T> {
    let quads = error_quads(disc);
    let s = accumulate(disc, &quads, &sys.beta, dirichlet, |e, x| (disc.space.eval(coeffs, e, x), disc.space.grad(coeffs, e, x)));
    NormSet::from_squares(s, disc.space.mesh.h)
}

/// Norms of `u - u_h` for the manufactured solution of `problem`.
pub fn error_norms<T: Real>(disc: &Discretization<T>, sys: &SparseSystem<T>, coeffs: &[T], problem: &ProblemSpec<T>) -> NormSet<T> {
    let quads = error_quads(disc);
    let dirichlet = problem.cut_bc == CutBc::Dirichlet;
    let s = accumulate(disc, &quads, &sys.beta, dirichlet, |e, x| {
        let g = disc.space.grad(coeffs, e, x);
        let gu = problem.solution.grad(x);
        (problem.solution.u(x) - disc.space.eval(coeffs, e, x), [gu[0] - g[0], gu[1] - g[1]])
    });
    NormSet::from_squares(s, disc.space.mesh.h)
}

/// `|||v|||_{h,★}`: the `|||·|||_h` norm plus the stabilization energy.
pub fn energy_star<T: Real>(norms: &NormSet<T>, sys: &SparseSystem<T>, coeffs: &[T]) -> T {
    let sh = sys.stabilization.as_ref().map_or(T::zero(), |s| s.quadratic_form(coeffs));
    (norms.energy_h * norms.energy_h + sh).sqrt()
}

/// `‖v‖_{a_h}` as `sqrt(v^T A v)` with the full (unreduced) operator.
pub fn operator_norm<T: Real>(sys: &SparseSystem<T>, coeffs: &[T]) -> T {
    sys.full_matrix.quadratic_form(coeffs).max(T::zero()).sqrt()
}

/// `a_h(v, v) + s_h(v, v)` evaluated by quadrature on the assembly rules,
/// independently of the assembled matrix.
pub fn operator_energy_quadrature<T: Real>(disc: &Discretization<T>, sys: &SparseSystem<T>, coeffs: &[T], problem: &ProblemSpec<T>) -> T {
    let mut total = T::zero();
    for &e in &disc.active.active {
        let Some(q) = &disc.quads[e] else { continue };
        for (&x, &w) in q.bulk.points.iter().zip(&q.bulk.weights) {
            let g = disc.space.grad(coeffs, e, x);
            total += w * dot(g, g);
        }
        if problem.cut_bc != CutBc::Dirichlet {
            continue;
        }
        for ((&x, &w), &n) in q.boundary.points.iter().zip(&q.boundary.weights).zip(&q.boundary.normals) {
            let v = disc.space.eval(coeffs, e, x);
            let dn = dot(disc.space.grad(coeffs, e, x), n);
            total += w * (sys.beta[e] * v * v - T::lit(2.0) * v * dn);
        }
    }
    total + sys.stabilization.as_ref().map_or(T::zero(), |s| s.quadratic_form(coeffs))
}
