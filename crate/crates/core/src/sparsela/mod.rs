//! Sparse linear algebra: CSR storage, ILU(0), sparse LU, restarted
//! GMRES/FGMRES and a dense-SVD condition number.

mod cond;
mod csr;
mod ilu;
mod krylov;
mod lu;
pub mod mm;

pub use cond::{condition_number, CONDITION_DIM_LIMIT};
pub use csr::CsrMatrix;
pub use ilu::Ilu0;
pub use krylov::{fgmres, gmres, write_residual_history, KrylovConfig, KrylovReport};
pub use lu::SparseLu;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid CSR structure: {0}")]
    InvalidStructure(String),

    #[error("zero pivot in row {row}")]
    ZeroPivot { row: usize },

    #[error("singular matrix (no pivot for column {column})")]
    Singular { column: usize },

    #[error("invalid Krylov configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix dimension {dim} exceeds the dense limit {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("matrix market: {0}")]
    MatrixMarket(String),
}

/// Square operator `y = A x`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Preconditioner action `z = M⁻¹ r`.
pub trait Preconditioner: Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// `M = I`.
pub struct IdentityPc;

impl Preconditioner for IdentityPc {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

impl Preconditioner for Ilu0 {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        self.solve_in_place(z);
    }
}

impl Preconditioner for SparseLu {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        self.solve_in_place(z);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
