//! Sparse assembly, Krylov solvers and a dense verification oracle.

mod csr;
mod dense;
mod krylov;
mod ordered;

pub use csr::{CsrMatrix, TripletBuffer};
pub use dense::{solve_dense_lu, DENSE_LIMIT};
pub use krylov::{
    solve_bicgstab, solve_bicgstab_from, solve_cg, solve_cg_refined, SolveOptions, SolveReport,
};
pub use ordered::OrderedSubstitution;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SparseError {
    #[error("entry ({row}, {col}) out of range for a {n}x{n} matrix")]
    IndexOutOfRange { row: usize, col: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("zero or non-finite diagonal in row {row}")]
    ZeroDiagonal { row: usize },
    #[error("solver breakdown at iteration {iteration}")]
    Breakdown { iteration: usize },
    #[error("no convergence after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("singular pivot in column {col}")]
    SingularPivot { col: usize },
    #[error("dense oracle limited to n <= {limit}, got {n}")]
    TooLarge { n: usize, limit: usize },
}
