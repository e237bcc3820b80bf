//! Sparse kernels, Krylov solver, dense oracles, and composite operators.

mod csr;
pub mod dense;
pub mod mmio;
mod operator;
mod pcg;

pub use csr::{CsrMatrix, TripletBuilder};
pub use dense::{dense_generalized_eig, jacobi_eigenvalues};
pub use operator::{
    symmetry_defect, BlockDiagonalOperator, DenseOperator, FnOperator, IdentityOperator,
    LinearOperator,
};
pub use pcg::{pcg, PcgOptions, PcgReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("invalid sparse structure: {0}")]
    InvalidStructure(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric positive definite")]
    NotSpd,
    #[error("dense problem of size {size} exceeds the budget of {budget}")]
    TooLarge { size: usize, budget: usize },
    #[error("CG breakdown at iteration {iteration}: {what} = {value:e}")]
    Breakdown { iteration: usize, what: &'static str, value: f64 },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
