//! Cut finite elements on a Cartesian background mesh for the Poisson
//! problem, with ghost-penalty and aggregation stabilizations, conditioning
//! and convergence studies.

// Comparisons are often written negated so that NaN takes the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod geometry;
pub mod quadrature;
pub mod scalar;
pub mod solvers;
pub mod spaces;
pub mod studies;

pub use scalar::{Real, Vec2};

/// Double precision aliases.
pub type LevelSetF64 = geometry::LevelSet<f64>;
pub type MeshF64 = geometry::BackgroundMesh<f64>;
pub type DiscretizationF64 = assembly::Discretization<f64>;
pub type SystemF64 = assembly::SparseSystem<f64>;
pub type CsrF64 = solvers::Csr<f64>;

/// Single precision aliases.
pub type LevelSetF32 = geometry::LevelSet<f32>;
pub type MeshF32 = geometry::BackgroundMesh<f32>;
pub type DiscretizationF32 = assembly::Discretization<f32>;
pub type SystemF32 = assembly::SparseSystem<f32>;
pub type CsrF32 = solvers::Csr<f32>;
