//! Finite element spaces and assembly.

mod assembly;
mod dpg;
pub mod quadrature;
pub mod reference;
mod space;

use std::io::Write;
use std::path::Path;

use thiserror::Error;

pub use assembly::{
    assemble_curl, assemble_h1_gram, assemble_hdiv_gram, assemble_pi, eval_rt, interpolate_rt_local,
};
pub use dpg::{assemble_dpg, DpgOperator, DpgSystem, Part};
pub use space::{DofLabel, Family, FeSpace};

use crate::linalg::LinalgError;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("unsupported degree {degree} for {family}")]
    UnsupportedDegree { family: Family, degree: usize },
    #[error("expected a {expected} space, got {got}")]
    FamilyMismatch { expected: Family, got: Family },
    #[error("lagrange degree {lagrange} must equal RT index {rt} + 1")]
    DegreeMismatch { lagrange: usize, rt: usize },
    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),
    #[error("test order r={r} is below trial order p={p}")]
    TestOrderTooLow { p: usize, r: usize },
    #[error("coefficient on element {element} is not positive ({value})")]
    NonpositiveCoefficient { element: usize, value: f64 },
    #[error("element {element}: local Gram block is not positive definite")]
    SingularBlock { element: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Writes one `i`/`f` label per line.
pub fn write_partition(path: impl AsRef<Path>, labels: &[DofLabel]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for l in labels {
        writeln!(w, "{}", l.letter())?;
    }
    w.flush()
}
