use crate::quadrature::CutQuadrature;
use crate::scalar::{dot, Real};
use crate::solvers::{sym_eigen, DenseMatrix};
use crate::spaces::{values_and_gradients, FeSpace};

use super::AssemblyError;

/// Element-wise Nitsche parameter `2 λ_max` of `E v = λ G v`, with
/// `E = ∫_{T∩∂Ω_D} ∂_nφ_k ∂_nφ_l` and `G = ∫_{T_Ω} ∇φ_k·∇φ_l`, on the
/// complement of the numerical null space of `G`.
pub fn nitsche_parameter_local<T: Real>(space: &FeSpace<T>, e: usize, quad: &CutQuadrature<T>) -> Result<T, AssemblyError> {
    let nl = (space.p + 1) * (space.p + 1);
    let h = space.mesh.h;
    let mut g = DenseMatrix::zeros(nl, nl);
    let mut emat = DenseMatrix::zeros(nl, nl);
    let (mut vals, mut grads) = (Vec::new(), Vec::new());
    for (&x, &w) in quad.bulk.points.iter().zip(&quad.bulk.weights) {
        values_and_gradients(space.p, space.to_reference(e, x), &mut vals, &mut grads);
        for a in 0..nl {
            for b in 0..nl {
                g[(a, b)] += w * dot(grads[a], grads[b]) / (h * h);
            }
        }
    }
    for ((&x, &w), &n) in quad.boundary.points.iter().zip(&quad.boundary.weights).zip(&quad.boundary.normals) {
        values_and_gradients(space.p, space.to_reference(e, x), &mut vals, &mut grads);
        let dn: Vec<T> = grads.iter().map(|gr| dot(*gr, n) / h).collect();
        for a in 0..nl {
            for b in 0..nl {
                emat[(a, b)] += w * dn[a] * dn[b];
            }
        }
    }
    generalized_max(&g, &emat).map(|l| T::lit(2.0) * l).ok_or(AssemblyError::DegenerateCut(e))
}

/// Largest `λ` of `E v = λ G v` restricted to the range of `G`; `None` when
/// `G` vanishes.
pub(crate) fn generalized_max<T: Real>(g: &DenseMatrix<T>, e: &DenseMatrix<T>) -> Option<T> {
    let n = g.rows;
    let eig = sym_eigen(g, true);
    let gmax = eig.values.iter().fold(T::zero(), |m, &v| m.max(v));
    if !(gmax > T::tol(1e-300)) || !gmax.is_finite() {
        return None;
    }
    let v = eig.vectors.expect("requested");
    let keep: Vec<usize> = (0..n).filter(|&k| eig.values[k] >= T::lit(1e-12) * gmax).collect();
    // W = V_r Λ_r^{-1/2}; the projected problem is W^T E W
    let w = DenseMatrix::from_fn(n, keep.len(), |i, c| v[(i, keep[c])] / eig.values[keep[c]].sqrt());
    let m = w.transpose().matmul(e).matmul(&w);
    Some(sym_eigen(&m, false).values.last().copied().unwrap_or(T::zero()).max(T::zero()))
}
