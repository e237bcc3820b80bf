//! Compressed sparse row storage.

use nalgebra::DMatrix;

use super::LinalgError;

/// General sparse matrix in compressed-row form.
///
/// Column indices are sorted within each row and never repeated.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw arrays, checking the structural invariants.
    pub fn new(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        if row_ptr.len() != nrows + 1 || row_ptr[0] != 0 {
            return Err(LinalgError::InvalidStructure("row pointer length".into()));
        }
        if col_idx.len() != values.len() || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(LinalgError::InvalidStructure("nnz mismatch".into()));
        }
        for i in 0..nrows {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(LinalgError::InvalidStructure(format!("row {i} pointer decreases")));
            }
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            for w in cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(LinalgError::InvalidStructure(format!(
                        "row {i} columns unsorted or duplicated"
                    )));
                }
            }
            if let Some(&c) = cols.last() {
                if c >= ncols {
                    return Err(LinalgError::InvalidStructure(format!("row {i} column {c} out of range")));
                }
            }
        }
        Ok(Self { nrows, ncols, row_ptr, col_idx, values })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Sums duplicate entries. Within a row, duplicates are accumulated in
    /// insertion order, so two entries fed the same sequence of values end up
    /// bitwise equal.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i},{j}) out of bounds");
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut order = vec![0usize; triplets.len()];
        for (t, &(i, _, _)) in triplets.iter().enumerate() {
            order[next[i]] = t;
            next[i] += 1;
        }

        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            scratch.clear();
            scratch.extend(order[counts[i]..counts[i + 1]].iter().map(|&t| (triplets[t].1, triplets[t].2)));
            // stable: keeps insertion order among equal columns
            scratch.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < scratch.len() {
                let c = scratch[k].0;
                let mut v = scratch[k].1;
                k += 1;
                while k < scratch.len() && scratch[k].0 == c {
                    v += scratch[k].1;
                    k += 1;
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    /// Converts a dense matrix, keeping entries with `|a| > drop_tol`.
    pub fn from_dense(a: &DMatrix<f64>, drop_tol: f64) -> Self {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let v = a[(i, j)];
                if v.abs() > drop_tol {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows: a.nrows(), ncols: a.ncols(), row_ptr, col_idx, values }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// `y = Aᵀ x`
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k]] += self.values[k] * xi;
            }
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let c = self.col_idx[k];
                col_idx[next[c]] = i;
                values[next[c]] = self.values[k];
                next[c] += 1;
            }
        }
        CsrMatrix { nrows: self.ncols, ncols: self.nrows, row_ptr: counts, col_idx, values }
    }

    /// Sparse product `A B`.
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows, "inner dimensions differ");
        let n = other.ncols;
        let mut marker = vec![usize::MAX; n];
        let mut acc = vec![0.0; n];
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut touched: Vec<usize> = Vec::new();
        row_ptr.push(0);
        for i in 0..self.nrows {
            touched.clear();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.values[k];
                let r = self.col_idx[k];
                for kk in other.row_ptr[r]..other.row_ptr[r + 1] {
                    let c = other.col_idx[kk];
                    if marker[c] != i {
                        marker[c] = i;
                        acc[c] = 0.0;
                        touched.push(c);
                    }
                    acc[c] += a * other.values[kk];
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                col_idx.push(c);
                values.push(acc[c]);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { nrows: self.nrows, ncols: n, row_ptr, col_idx, values }
    }

    /// Galerkin triple product `Pᵀ A P`, symmetrized so the result is exactly
    /// symmetric when `A` is symmetric up to roundoff.
    pub fn ptap(&self, p: &CsrMatrix) -> CsrMatrix {
        let ap = self.matmul(p);
        let c = p.transpose().matmul(&ap);
        c.symmetrized()
    }

    /// `(A + Aᵀ) / 2`, exactly symmetric.
    pub fn symmetrized(&self) -> CsrMatrix {
        assert_eq!(self.nrows, self.ncols);
        let t = self.transpose();
        let mut trip = Vec::with_capacity(2 * self.nnz());
        for i in 0..self.nrows {
            let (ca, va) = self.row(i);
            let (ct, vt) = t.row(i);
            let (mut a, mut b) = (0, 0);
            while a < ca.len() || b < ct.len() {
                let (c, v) = if b >= ct.len() || (a < ca.len() && ca[a] < ct[b]) {
                    let r = (ca[a], 0.5 * va[a]);
                    a += 1;
                    r
                } else if a >= ca.len() || ct[b] < ca[a] {
                    let r = (ct[b], 0.5 * vt[b]);
                    b += 1;
                    r
                } else {
                    // min/max ordering makes (i,j) and (j,i) identical
                    let (x, y) = (va[a], vt[b]);
                    let r = (ca[a], 0.5 * (x.min(y) + x.max(y)));
                    a += 1;
                    b += 1;
                    r
                };
                trip.push((i, c, v));
            }
        }
        CsrMatrix::from_triplets(self.nrows, self.ncols, &trip)
    }

    /// Extracts `A[rows, cols]`; `rows`/`cols` give the kept indices in the
    /// order they appear in the result.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut trip = Vec::new();
        for (ri, &r) in rows.iter().enumerate() {
            let (cs, vs) = self.row(r);
            for (&c, &v) in cs.iter().zip(vs) {
                if col_map[c] != usize::MAX {
                    trip.push((ri, col_map[c], v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), cols.len(), &trip)
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// Bitwise transpose equality.
    pub fn is_symmetric_exact(&self) -> bool {
        self.is_square() && *self == self.transpose()
    }

    /// Symmetry up to `tol` relative to the geometric mean of the two diagonals.
    pub fn is_symmetric_within(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let d = self.diagonal();
        for i in 0..self.nrows {
            let (cs, vs) = self.row(i);
            for (&j, &v) in cs.iter().zip(vs) {
                let w = self.get(j, i);
                let scale = (d[i].abs() * d[j].abs()).sqrt().max(v.abs()).max(w.abs());
                if (v - w).abs() > tol * scale.max(f64::MIN_POSITIVE) {
                    return false;
                }
            }
        }
        true
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cs, vs) = self.row(i);
            for (&j, &v) in cs.iter().zip(vs) {
                a[(i, j)] += v;
            }
        }
        a
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }
}

/// Row-wise triplet accumulator used by the assembly loops.
#[derive(Debug, Default, Clone)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        self.entries.push((i, j, v));
    }

    pub fn extend(&mut self, other: TripletBuilder) {
        self.entries.extend(other.entries);
    }

    pub fn build(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.nrows, self.ncols, &self.entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 2.0), (0, 2, 1.0), (1, 1, 3.0), (2, 0, 1.0), (2, 2, 4.0), (0, 0, 1.0)],
        )
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = sample();
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 5);
        assert!(a.is_symmetric_exact());
    }

    #[test]
    fn matmul_matches_dense() {
        let a = sample();
        let b = CsrMatrix::from_triplets(3, 2, &[(0, 1, 1.5), (1, 0, -2.0), (2, 1, 0.5)]);
        let c = a.matmul(&b).to_dense();
        let d = a.to_dense() * b.to_dense();
        assert!((c - d).abs().max() < 1e-15);
    }

    #[test]
    fn transpose_matvec() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 1, 2.0), (1, 2, -1.0), (1, 0, 4.0)]);
        let x = [1.0, 2.0];
        let mut y = [0.0; 3];
        a.matvec_transpose(&x, &mut y);
        assert_eq!(y.to_vec(), a.transpose().mul_vec(&x));
    }

    #[test]
    fn new_rejects_unsorted() {
        assert!(CsrMatrix::new(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn submatrix_reorders() {
        let a = sample();
        let s = a.submatrix(&[2, 0], &[2, 0]);
        assert_eq!(s.get(0, 0), 4.0);
        assert_eq!(s.get(1, 1), 3.0);
        assert_eq!(s.get(0, 1), 1.0);
    }
}
