//! Sparse symmetric linear algebra: CSR storage, dense kernels, (flexible)
//! preconditioned CG, Schwarz preconditioners and spectral estimates.

mod dense;
mod krylov;
mod schwarz;
mod sparse;
mod spectrum;

pub use dense::{cholesky, sym_eigen, Cholesky, DenseMatrix, SymEigen};
pub use krylov::{pcg, Jacobi, Preconditioner, SolveOptions, SolveReport};
pub use schwarz::{build_schwarz, select_blocks, BlockIndexSet, BlockStrategy, SchwarzMode, SchwarzPreconditioner};
pub use sparse::Csr;
pub use spectrum::{condition_number, inverse_iteration, jacobi_scale, lanczos_max, CondMethod, Spectrum, DENSE_LIMIT};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolverError {
    #[error("matrix not SPD")]
    NotSpd,
    #[error("indefinite/singular")]
    Indefinite,
    #[error("fully degenerate block {0}")]
    DegenerateBlock(usize),
    #[error("non-positive diagonal entry at row {0}")]
    NonPositiveDiagonal(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix of size {size} exceeds the dense limit {limit}")]
    TooLarge { size: usize, limit: usize },
}
