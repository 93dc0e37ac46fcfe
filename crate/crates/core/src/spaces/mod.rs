//! Continuous Q_p Lagrange spaces on the active mesh and the aggregation
//! (AgFEM) machinery that constrains ill-posed degrees of freedom.

mod aggregation;
mod basis;

pub use aggregation::{aggregate, build_constraints, classify_dofs, interpolate_constrained, Aggregate, AggregateMap, ConstraintSet, DofClassification};
pub use basis::shape_eval;
pub(crate) use basis::values_and_gradients;

use thiserror::Error;

use crate::geometry::{ActiveMesh, BackgroundMesh};
use crate::scalar::{Real, Vec2};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpaceError {
    #[error("unsupported polynomial order {0} (expected 1 or 2)")]
    UnsupportedOrder(usize),
    #[error("derivative order {0} exceeds 2")]
    DerivativeOrder(usize),
    #[error("cut element {0} cannot reach any well-posed element")]
    Unreachable(usize),
    #[error("element {element} is {length} elements away from its root (limit {max})")]
    ChainTooLong { element: usize, length: usize, max: usize },
}

/// Q_p space restricted to the active elements.
#[derive(Clone, Debug)]
pub struct FeSpace<T> {
    pub p: usize,
    pub mesh: BackgroundMesh<T>,
    /// Nodes per axis of the full background node lattice.
    pub lattice: (usize, usize),
    /// Lattice node to DOF, `None` for nodes touched by no active element.
    pub node_dof: Vec<Option<usize>>,
    pub dof_node: Vec<usize>,
    pub coords: Vec<Vec2<T>>,
    /// Local-to-global map per background element; empty for exterior ones.
    pub element_dofs: Vec<Vec<usize>>,
}

/// Builds the space on `active` with lexicographic DOF numbering
/// (x-fastest over the node lattice).
pub fn build_space<T: Real>(active: &ActiveMesh<T>, p: usize) -> Result<FeSpace<T>, SpaceError> {
    if !(1..=2).contains(&p) {
        return Err(SpaceError::UnsupportedOrder(p));
    }
    let mesh = active.mesh.clone();
    let (lx, ly) = (p * mesh.nx + 1, p * mesh.ny + 1);
    let local_nodes = |e: usize| {
        let (i, j) = mesh.element_ij(e);
        (0..=p).flat_map(move |b| (0..=p).map(move |a| (p * j + b) * lx + p * i + a))
    };
    let mut touched = vec![false; lx * ly];
    for &e in &active.active {
        for n in local_nodes(e) {
            touched[n] = true;
        }
    }
    let mut node_dof = vec![None; lx * ly];
    let mut dof_node = Vec::new();
    let mut coords = Vec::new();
    let step = mesh.h / T::lit(p as f64);
    for (n, _) in touched.iter().enumerate().filter(|(_, &t)| t) {
        node_dof[n] = Some(dof_node.len());
        dof_node.push(n);
        let (a, b) = (n % lx, n / lx);
        coords.push([mesh.origin[0] + T::lit(a as f64) * step, mesh.origin[1] + T::lit(b as f64) * step]);
    }
    let mut element_dofs = vec![Vec::new(); mesh.num_elements()];
    for &e in &active.active {
        element_dofs[e] = local_nodes(e).map(|n| node_dof[n].expect("node of an active element")).collect();
    }
    Ok(FeSpace { p, mesh, lattice: (lx, ly), node_dof, dof_node, coords, element_dofs })
}

impl<T: Real> FeSpace<T> {
    pub fn num_dofs(&self) -> usize {
        self.dof_node.len()
    }

    pub fn dofs(&self, e: usize) -> &[usize] {
        &self.element_dofs[e]
    }

    /// Affine map from physical coordinates to the reference frame of `e`.
    pub fn to_reference(&self, e: usize, x: Vec2<T>) -> Vec2<T> {
        let o = self.mesh.element_origin(e);
        [(x[0] - o[0]) / self.mesh.h, (x[1] - o[1]) / self.mesh.h]
    }

    /// Local basis of `e` (or its physical derivatives) at the physical point `x`.
    pub fn eval_basis(&self, e: usize, x: Vec2<T>, deriv: (usize, usize)) -> Vec<T> {
        let scale = self.mesh.h.powi(-((deriv.0 + deriv.1) as i32));
        let mut v = shape_eval(self.p, self.to_reference(e, x), deriv).expect("validated order");
        for val in &mut v {
            *val *= scale;
        }
        v
    }

    /// Value of the finite element function `coeffs` restricted to `e`,
    /// extended canonically when `x` lies outside the element.
    pub fn eval(&self, coeffs: &[T], e: usize, x: Vec2<T>) -> T {
        self.eval_basis(e, x, (0, 0)).iter().zip(self.dofs(e)).map(|(&v, &d)| v * coeffs[d]).sum()
    }

    pub fn grad(&self, coeffs: &[T], e: usize, x: Vec2<T>) -> Vec2<T> {
        let gx = self.eval_basis(e, x, (1, 0));
        let gy = self.eval_basis(e, x, (0, 1));
        let mut g = [T::zero(); 2];
        for (k, &d) in self.dofs(e).iter().enumerate() {
            g[0] += gx[k] * coeffs[d];
            g[1] += gy[k] * coeffs[d];
        }
        g
    }

    /// Lattice position `(a, b)` of a DOF.
    pub fn node_ij(&self, dof: usize) -> (usize, usize) {
        let n = self.dof_node[dof];
        (n % self.lattice.0, n / self.lattice.0)
    }

    /// Whether the DOF's node lies on the boundary of the ambient box.
    pub fn on_box_boundary(&self, dof: usize) -> bool {
        let (a, b) = self.node_ij(dof);
        a == 0 || b == 0 || a + 1 == self.lattice.0 || b + 1 == self.lattice.1
    }
}

/// Nodal interpolation into the unconstrained space.
pub fn interpolate<T: Real>(space: &FeSpace<T>, u: impl Fn(Vec2<T>) -> T) -> Vec<T> {
    space.coords.iter().map(|&x| u(x)).collect()
}
