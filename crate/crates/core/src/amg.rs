//! Classical (Ruge–Stüben) algebraic multigrid with direct interpolation.

use std::collections::BinaryHeap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{CsrMatrix, LinearOperator};

#[derive(Debug, Error)]
pub enum AmgError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("nonpositive diagonal entry {value:e} in row {row}")]
    BadDiagonal { row: usize, value: f64 },
    #[error("function labels have length {got}, expected {expected}")]
    BadFunctions { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmgParams {
    /// Strength threshold θ.
    pub theta: f64,
    pub max_levels: usize,
    /// Stop coarsening once a level has at most this many rows.
    pub coarse_size: usize,
    /// Gauss–Seidel sweeps before and after the coarse correction.
    pub sweeps: usize,
}

impl Default for AmgParams {
    fn default() -> Self {
        Self { theta: 0.25, max_levels: 25, coarse_size: 64, sweeps: 1 }
    }
}

#[derive(Debug, Clone)]
struct Level {
    a: CsrMatrix,
    /// Prolongation to this level from the next coarser one.
    p: Option<CsrMatrix>,
    pt: Option<CsrMatrix>,
    diag: Vec<f64>,
}

/// Per-level summary.
#[derive(Debug, Clone, Serialize)]
pub struct AmgStats {
    pub levels: usize,
    pub sizes: Vec<usize>,
    pub nnz: Vec<usize>,
    pub operator_complexity: f64,
    pub grid_complexity: f64,
}

#[derive(Debug, Clone)]
pub struct AmgHierarchy {
    levels: Vec<Level>,
    /// Symmetric (pseudo-)inverse of the coarsest operator.
    coarse_inv: DMatrix<f64>,
    params: AmgParams,
}

/// Builds the hierarchy for a symmetric matrix with positive diagonal.
pub fn amg_setup(a: &CsrMatrix, params: &AmgParams) -> Result<AmgHierarchy, AmgError> {
    amg_setup_systems(a, None, params)
}

/// As [`amg_setup`], but only couples unknowns carrying the same function
/// label (the "unknown" approach for vector problems).
pub fn amg_setup_systems(
    a: &CsrMatrix,
    functions: Option<&[usize]>,
    params: &AmgParams,
) -> Result<AmgHierarchy, AmgError> {
    if !a.is_square() {
        return Err(AmgError::NotSquare(a.nrows(), a.ncols()));
    }
    if !a.is_symmetric_within(1e-10) {
        return Err(AmgError::NotSymmetric);
    }
    let diag = a.diagonal();
    if let Some((row, &value)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(AmgError::BadDiagonal { row, value });
    }
    let mut func: Vec<usize> = match functions {
        Some(f) if f.len() != a.nrows() => {
            return Err(AmgError::BadFunctions { got: f.len(), expected: a.nrows() })
        }
        Some(f) => f.to_vec(),
        None => vec![0; a.nrows()],
    };

    let mut levels = vec![Level { a: a.clone(), p: None, pt: None, diag }];
    while levels.len() < params.max_levels.max(1) {
        let fine = &levels.last().unwrap().a;
        let n = fine.nrows();
        if n <= params.coarse_size {
            break;
        }
        let s = strength(fine, &func, params.theta);
        let cf = split(&s, n);
        let nc = cf.iter().filter(|c| **c).count();
        if nc == 0 || nc >= n {
            break;
        }
        let p = direct_interpolation(fine, &s, &cf, &func);
        let coarse = fine.ptap(&p);
        let diag = coarse.diagonal();
        if diag.iter().any(|d| !(*d > 0.0)) {
            break;
        }
        func = func.iter().zip(&cf).filter(|(_, c)| **c).map(|(f, _)| *f).collect();
        let last = levels.last_mut().unwrap();
        last.pt = Some(p.transpose());
        last.p = Some(p);
        levels.push(Level { a: coarse, p: None, pt: None, diag });
    }
    let coarse_inv = pseudo_inverse(&levels.last().unwrap().a.to_dense());
    Ok(AmgHierarchy { levels, coarse_inv, params: *params })
}

/// Strong dependencies `S_i = { j ≠ i : −a_ij ≥ θ max_k(−a_ik) }`, same function only.
fn strength(a: &CsrMatrix, func: &[usize], theta: f64) -> Vec<Vec<usize>> {
    (0..a.nrows())
        .map(|i| {
            let (cs, vs) = a.row(i);
            let mx = cs
                .iter()
                .zip(vs)
                .filter(|(&j, _)| j != i && func[j] == func[i])
                .fold(0.0f64, |m, (_, &v)| m.max(-v));
            if mx <= 0.0 {
                return Vec::new();
            }
            cs.iter()
                .zip(vs)
                .filter(|(&j, &v)| j != i && func[j] == func[i] && -v >= theta * mx)
                .map(|(&j, _)| j)
                .collect()
        })
        .collect()
}

/// Two-pass C/F splitting; `true` marks a C-point.
fn split(s: &[Vec<usize>], n: usize) -> Vec<bool> {
    #[derive(Clone, Copy, PartialEq)]
    enum St {
        U,
        C,
        F,
    }
    // S^T: points that depend strongly on i
    let mut st: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, si) in s.iter().enumerate() {
        for &j in si {
            st[j].push(i);
        }
    }
    let mut state = vec![St::U; n];
    let mut lambda: Vec<usize> = st.iter().map(|v| v.len()).collect();
    for i in 0..n {
        if s[i].is_empty() && st[i].is_empty() {
            state[i] = St::F;
        }
    }
    // max-heap on (λ, reverse index) for a deterministic natural-order tie break
    let mut heap: BinaryHeap<(usize, std::cmp::Reverse<usize>)> =
        (0..n).filter(|&i| state[i] == St::U).map(|i| (lambda[i], std::cmp::Reverse(i))).collect();
    while let Some((l, std::cmp::Reverse(i))) = heap.pop() {
        if state[i] != St::U || l != lambda[i] {
            continue;
        }
        if l == 0 {
            // nothing depends on i: F if it already sees a C-point
            state[i] = if s[i].iter().any(|&j| state[j] == St::C) || s[i].is_empty() { St::F } else { St::C };
            continue;
        }
        state[i] = St::C;
        for &j in &st[i] {
            if state[j] != St::U {
                continue;
            }
            state[j] = St::F;
            for &k in &s[j] {
                if state[k] == St::U {
                    lambda[k] += 1;
                    heap.push((lambda[k], std::cmp::Reverse(k)));
                }
            }
        }
        for &k in &s[i] {
            if state[k] == St::U && lambda[k] > 0 {
                lambda[k] -= 1;
                heap.push((lambda[k], std::cmp::Reverse(k)));
            }
        }
    }
    // second pass: strongly F-F connected pairs must share a strong C-point
    let mut mark = vec![usize::MAX; n];
    for i in 0..n {
        if state[i] != St::F {
            continue;
        }
        for &j in &s[i] {
            if state[j] == St::C {
                mark[j] = i;
            }
        }
        for &j in &s[i] {
            if state[j] == St::F && !s[j].iter().any(|&k| mark[k] == i) {
                state[j] = St::C;
                mark[j] = i;
            }
        }
    }
    state.into_iter().map(|s| s == St::C).collect()
}

fn direct_interpolation(a: &CsrMatrix, s: &[Vec<usize>], cf: &[bool], func: &[usize]) -> CsrMatrix {
    let n = a.nrows();
    let mut cidx = vec![usize::MAX; n];
    let mut nc = 0;
    for i in 0..n {
        if cf[i] {
            cidx[i] = nc;
            nc += 1;
        }
    }
    let mut strong_c = vec![usize::MAX; n];
    let mut trip = Vec::new();
    for i in 0..n {
        if cf[i] {
            trip.push((i, cidx[i], 1.0));
            continue;
        }
        for &j in &s[i] {
            if cf[j] {
                strong_c[j] = i;
            }
        }
        let (cs, vs) = a.row(i);
        let (mut diag, mut neg, mut pos, mut neg_c, mut pos_c) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&j, &v) in cs.iter().zip(vs) {
            if j == i {
                diag += v;
                continue;
            }
            if func[j] != func[i] {
                continue;
            }
            let in_c = strong_c[j] == i;
            if v < 0.0 {
                neg += v;
                if in_c {
                    neg_c += v;
                }
            } else {
                pos += v;
                if in_c {
                    pos_c += v;
                }
            }
        }
        if pos_c == 0.0 {
            diag += pos;
        }
        let alpha = if neg_c != 0.0 { neg / neg_c } else { 0.0 };
        let beta = if pos_c != 0.0 { pos / pos_c } else { 0.0 };
        for (&j, &v) in cs.iter().zip(vs) {
            if j == i || strong_c[j] != i {
                continue;
            }
            let w = if v < 0.0 { -alpha * v / diag } else { -beta * v / diag };
            if w != 0.0 {
                trip.push((i, cidx[j], w));
            }
        }
    }
    CsrMatrix::from_triplets(n, nc, &trip)
}

/// Symmetric pseudo-inverse; eigenvalues below `1e-12·λ_max` are dropped.
fn pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let l = eig.eigenvalues[k];
        if l.abs() <= 1e-12 * lmax {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        out += (v * v.transpose()) / l;
    }
    (&out + out.transpose()) * 0.5
}

fn gauss_seidel(a: &CsrMatrix, diag: &[f64], b: &[f64], x: &mut [f64], forward: bool) {
    let n = a.nrows();
    let mut step = |i: usize| {
        let (cs, vs) = a.row(i);
        let mut r = b[i];
        for (&j, &v) in cs.iter().zip(vs) {
            if j != i {
                r -= v * x[j];
            }
        }
        x[i] = r / diag[i];
    };
    if forward {
        (0..n).for_each(&mut step);
    } else {
        (0..n).rev().for_each(&mut step);
    }
}

impl AmgHierarchy {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn params(&self) -> &AmgParams {
        &self.params
    }

    pub fn operator(&self, level: usize) -> &CsrMatrix {
        &self.levels[level].a
    }

    /// Prolongation from `level + 1` to `level`.
    pub fn prolongation(&self, level: usize) -> Option<&CsrMatrix> {
        self.levels[level].p.as_ref()
    }

    pub fn stats(&self) -> AmgStats {
        let sizes: Vec<usize> = self.levels.iter().map(|l| l.a.nrows()).collect();
        let nnz: Vec<usize> = self.levels.iter().map(|l| l.a.nnz()).collect();
        AmgStats {
            levels: self.levels.len(),
            operator_complexity: nnz.iter().sum::<usize>() as f64 / nnz[0].max(1) as f64,
            grid_complexity: sizes.iter().sum::<usize>() as f64 / sizes[0].max(1) as f64,
            sizes,
            nnz,
        }
    }

    /// One V(ν,ν) cycle from a zero initial guess: forward Gauss–Seidel
    /// before, backward after the coarse correction.
    pub fn vcycle(&self, r: &[f64], x: &mut [f64]) {
        self.cycle(0, r, x);
    }

    fn cycle(&self, l: usize, b: &[f64], x: &mut [f64]) {
        let lev = &self.levels[l];
        x.iter_mut().for_each(|v| *v = 0.0);
        let (p, pt) = match (&lev.p, &lev.pt) {
            (Some(p), Some(pt)) => (p, pt),
            _ => {
                let n = b.len();
                for i in 0..n {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += self.coarse_inv[(i, j)] * b[j];
                    }
                    x[i] = s;
                }
                return;
            }
        };
        for _ in 0..self.params.sweeps {
            gauss_seidel(&lev.a, &lev.diag, b, x, true);
        }
        let mut res = lev.a.mul_vec(x);
        for (ri, bi) in res.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let rc = pt.mul_vec(&res);
        let mut ec = vec![0.0; rc.len()];
        self.cycle(l + 1, &rc, &mut ec);
        let corr = p.mul_vec(&ec);
        for (xi, ci) in x.iter_mut().zip(&corr) {
            *xi += ci;
        }
        for _ in 0..self.params.sweeps {
            gauss_seidel(&lev.a, &lev.diag, b, x, false);
        }
    }
}

impl LinearOperator for AmgHierarchy {
    fn dim(&self) -> usize {
        self.levels[0].a.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.vcycle(x, y);
    }
    fn is_symmetric(&self) -> bool {
        true
    }
}
