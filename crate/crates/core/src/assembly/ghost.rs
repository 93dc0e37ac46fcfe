//! Ghost-penalty forms on the ghost faces of the active mesh.

use rayon::prelude::*;

use crate::geometry::FaceOrientation;
use crate::quadrature::gauss_legendre;
use crate::scalar::Real;
use crate::solvers::Csr;
use crate::spaces::FeSpace;

type Triplets<T> = Vec<(usize, usize, T)>;

/// Adds `coef * w * j j^T` over the coupled DOFs.
fn outer<T: Real>(out: &mut Triplets<T>, dofs: &[usize], jump: &[T], coef: T) {
    for (a, &da) in dofs.iter().enumerate() {
        if jump[a] == T::zero() {
            continue;
        }
        for (b, &db) in dofs.iter().enumerate() {
            out.push((da, db, coef * jump[a] * jump[b]));
        }
    }
}

fn pair_dofs<T: Real>(space: &FeSpace<T>, minus: usize, plus: usize) -> Vec<usize> {
    let mut d = space.dofs(minus).to_vec();
    d.extend_from_slice(space.dofs(plus));
    d
}

/// Calls `visit(dofs, jump, weight)` at every quadrature point of the face
/// penalty, where `jump` holds the jumps of the coupled basis functions.
fn visit_face<T: Real>(space: &FeSpace<T>, fi: usize, tau: &[T], neumann_scaling: bool, mut visit: impl FnMut(&[usize], &[T], T)) {
    let mesh = &space.mesh;
    let h = mesh.h;
    let p = space.p;
    let face = mesh.face(fi);
    let Some((minus, plus)) = mesh.face_elements(face) else {
        return;
    };
    let g = gauss_legendre::<T>(p + 1).expect("order within range");
    let o = mesh.face_origin(face);
    let dofs = pair_dofs(space, minus, plus);
    for j in 1..=p {
        let t = tau[(j - 1).min(tau.len() - 1)];
        let exponent = if neumann_scaling { 2 * j + 1 } else { 2 * j - 1 };
        let coef = t * h.powi(exponent as i32);
        if coef == T::zero() {
            continue;
        }
        let deriv = match face.orientation {
            FaceOrientation::Vertical => (j, 0),
            FaceOrientation::Horizontal => (0, j),
        };
        for (&s, &w) in g.points.iter().zip(&g.weights) {
            let x = match face.orientation {
                FaceOrientation::Vertical => [o[0], o[1] + s * h],
                FaceOrientation::Horizontal => [o[0] + s * h, o[1]],
            };
            let mut jump: Vec<T> = space.eval_basis(minus, x, deriv).into_iter().map(|v| -v).collect();
            jump.extend(space.eval_basis(plus, x, deriv));
            visit(&dofs, &jump, coef * w * h);
        }
    }
}

/// Element-based counterpart of [`visit_face`]; `jump` is the difference of
/// the two polynomial extensions.
fn visit_element<T: Real>(space: &FeSpace<T>, fi: usize, tau: T, variant: ElementGhost, mut visit: impl FnMut(&[usize], &[T], T)) {
    let mesh = &space.mesh;
    let h = mesh.h;
    let Some((t1, t2)) = mesh.face_elements(mesh.face(fi)) else {
        return;
    };
    let g = gauss_legendre::<T>(space.p + 1).expect("order within range");
    let dofs = pair_dofs(space, t1, t2);
    let (derivs, coef): (&[(usize, usize)], T) = match variant {
        ElementGhost::S0 => (&[(0, 0)], tau / (h * h)),
        ElementGhost::S1 => (&[(1, 0), (0, 1)], tau),
    };
    for host in [t1, t2] {
        let o = mesh.element_origin(host);
        for (&yq, &wy) in g.points.iter().zip(&g.weights) {
            for (&xq, &wx) in g.points.iter().zip(&g.weights) {
                let x = [o[0] + xq * h, o[1] + yq * h];
                for &d in derivs {
                    let mut diff = space.eval_basis(t1, x, d);
                    diff.extend(space.eval_basis(t2, x, d).into_iter().map(|v| -v));
                    visit(&dofs, &diff, coef * wx * wy * h * h);
                }
            }
        }
    }
}

fn jump_of<T: Real>(dofs: &[usize], jump: &[T], v: &[T]) -> T {
    dofs.iter().zip(jump).map(|(&d, &j)| j * v[d]).sum()
}

/// Face-based penalty `Σ_F Σ_j τ_j h^{2j-1} (⟦∂_n^j w⟧, ⟦∂_n^j v⟧)_F`, with
/// `h^{2j+1}` when `neumann_scaling` is set. The jump is taken along the
/// fixed face normal (`+x` or `+y`), so its sign convention drops out.
pub fn ghost_penalty_face<T: Real>(space: &FeSpace<T>, faces: &[usize], tau: &[T], neumann_scaling: bool) -> Csr<T> {
    let parts: Vec<Triplets<T>> = faces
        .par_iter()
        .map(|&fi| {
            let mut local = Vec::new();
            visit_face(space, fi, tau, neumann_scaling, |dofs, jump, w| outer(&mut local, dofs, jump, w));
            local
        })
        .collect();
    Csr::from_triplets(space.num_dofs(), space.num_dofs(), parts.concat())
}

/// `s_h(v, v)` of the face penalty, summed from squared jumps so that a
/// vanishing jump stays at round-off squared rather than round-off.
pub fn ghost_face_value<T: Real>(space: &FeSpace<T>, faces: &[usize], tau: &[T], neumann_scaling: bool, v: &[T]) -> T {
    let mut total = T::zero();
    for &fi in faces {
        visit_face(space, fi, tau, neumann_scaling, |dofs, jump, w| {
            let j = jump_of(dofs, jump, v);
            total += w * j * j;
        });
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementGhost {
    /// `τ h^{-2} ∫_{T1 ∪ T2} (v1 - v2)^2`.
    S0,
    /// `τ ∫_{T1 ∪ T2} |∇v1 - ∇v2|^2`.
    S1,
}

/// Element-based penalty on the patch of the two elements sharing each ghost
/// face, comparing the canonical polynomial extensions of `v|_{T1}` and
/// `v|_{T2}` over both full background elements.
pub fn ghost_penalty_element<T: Real>(space: &FeSpace<T>, faces: &[usize], tau: T, variant: ElementGhost) -> Csr<T> {
    let parts: Vec<Triplets<T>> = faces
        .par_iter()
        .map(|&fi| {
            let mut local = Vec::new();
            visit_element(space, fi, tau, variant, |dofs, diff, w| outer(&mut local, dofs, diff, w));
            local
        })
        .collect();
    Csr::from_triplets(space.num_dofs(), space.num_dofs(), parts.concat())
}

/// `s_h(v, v)` of the element penalty, from squared differences.
pub fn ghost_element_value<T: Real>(space: &FeSpace<T>, faces: &[usize], tau: T, variant: ElementGhost, v: &[T]) -> T {
    let mut total = T::zero();
    for &fi in faces {
        visit_element(space, fi, tau, variant, |dofs, diff, w| {
            let j = jump_of(dofs, diff, v);
            total += w * j * j;
        });
    }
    total
}
