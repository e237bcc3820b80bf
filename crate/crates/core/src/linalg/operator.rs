use nalgebra::DMatrix;

use super::{dot, norm2, CsrMatrix};

/// A square linear map `y = Op x`, applied without forming the matrix.
pub trait LinearOperator: Send + Sync {
    fn dim(&self) -> usize;

    /// Overwrites `y` with `Op x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn is_symmetric(&self) -> bool {
        false
    }

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }

    /// Probes the operator with unit vectors. Only sensible for small sizes.
    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut y = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut y);
            for i in 0..n {
                out[(i, j)] = y[i];
            }
            e[j] = 0.0;
        }
        out
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        assert!(self.is_square());
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y);
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
    fn is_symmetric(&self) -> bool {
        (**self).is_symmetric()
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
    fn is_symmetric(&self) -> bool {
        (**self).is_symmetric()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IdentityOperator(pub usize);

impl LinearOperator for IdentityOperator {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
    fn is_symmetric(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub matrix: DMatrix<f64>,
    pub symmetric: bool,
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += self.matrix[(i, j)] * x[j];
            }
            y[i] = s;
        }
    }
    fn is_symmetric(&self) -> bool {
        self.symmetric
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F> {
    dim: usize,
    symmetric: bool,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Send + Sync> FnOperator<F> {
    pub fn new(dim: usize, symmetric: bool, f: F) -> Self {
        Self { dim, symmetric, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Send + Sync> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
    fn is_symmetric(&self) -> bool {
        self.symmetric
    }
}

/// `diag(Op₁, Op₂, …)` acting on the concatenation of the block vectors.
pub struct BlockDiagonalOperator {
    blocks: Vec<Box<dyn LinearOperator>>,
    offsets: Vec<usize>,
}

impl BlockDiagonalOperator {
    pub fn new(blocks: Vec<Box<dyn LinearOperator>>) -> Self {
        let mut offsets = vec![0];
        for b in &blocks {
            offsets.push(offsets.last().unwrap() + b.dim());
        }
        Self { blocks, offsets }
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn block(&self, k: usize) -> &dyn LinearOperator {
        self.blocks[k].as_ref()
    }
}

impl LinearOperator for BlockDiagonalOperator {
    fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (k, b) in self.blocks.iter().enumerate() {
            let r = self.offsets[k]..self.offsets[k + 1];
            b.apply(&x[r.clone()], &mut y[r]);
        }
    }
    fn is_symmetric(&self) -> bool {
        self.blocks.iter().all(|b| b.is_symmetric())
    }
}

/// Worst `|⟨Op x, y⟩ − ⟨x, Op y⟩| / (‖x‖‖y‖)` over the given probe pairs.
pub fn symmetry_defect(op: &dyn LinearOperator, probes: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, y) in probes {
        let ox = op.apply_vec(x);
        let oy = op.apply_vec(y);
        let d = (dot(&ox, y) - dot(x, &oy)).abs() / (norm2(x) * norm2(y));
        worst = worst.max(d);
    }
    worst
}
