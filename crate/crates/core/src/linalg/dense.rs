//! Small dense oracles: generalized symmetric eigenvalues and a cyclic Jacobi
//! eigensolver used to cross-check them.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use super::LinalgError;

/// Dense problems larger than this are refused.
pub const DENSE_BUDGET: usize = 4000;

/// Ascending spectrum of `A x = λ G x` for symmetric `A` and SPD `G`.
///
/// Reduces to `L⁻¹ A L⁻ᵀ` with `G = L Lᵀ` and solves the standard symmetric
/// problem by tridiagonal QL/QR iteration.
pub fn dense_generalized_eig(a: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<Vec<f64>, LinalgError> {
    let c = reduce_to_standard(a, g)?;
    let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(ev)
}

/// `L⁻¹ A L⁻ᵀ`, symmetrized, where `G = L Lᵀ`.
pub fn reduce_to_standard(a: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n || g.nrows() != n || g.ncols() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "A is {}x{}, G is {}x{}",
            a.nrows(),
            a.ncols(),
            g.nrows(),
            g.ncols()
        )));
    }
    if n > DENSE_BUDGET {
        return Err(LinalgError::TooLarge { size: n, budget: DENSE_BUDGET });
    }
    let chol = Cholesky::new(symmetrize(g)).ok_or(LinalgError::NotSpd)?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(a)
        .ok_or(LinalgError::NotSpd)?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or(LinalgError::NotSpd)?;
    Ok(symmetrize(&c))
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = symmetrize(a);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let total: f64 = m.iter().map(|v| v * v).sum();
        if off <= 1e-30 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let chol = Cholesky::new(symmetrize(a)).ok_or(LinalgError::NotSpd)?;
    Ok(symmetrize(&chol.inverse()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn equal_pair_gives_unit_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_spd(12, &mut rng);
        let ev = dense_generalized_eig(&g, &g).unwrap();
        assert!(ev.iter().all(|l| (l - 1.0).abs() < 1e-12), "{ev:?}");
    }

    #[test]
    fn diagonal_against_identity() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0]));
        let g = DMatrix::identity(2, 2);
        let ev = dense_generalized_eig(&a, &g).unwrap();
        assert_eq!(ev.len(), 2);
        assert!((ev[0] - 1.0).abs() < 1e-15 && (ev[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn tridiagonal_ql_agrees_with_jacobi() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [3, 10, 25] {
            let a = {
                let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
                symmetrize(&b)
            };
            let g = random_spd(n, &mut rng);
            let ql = dense_generalized_eig(&a, &g).unwrap();
            let jac = jacobi_eigenvalues(&reduce_to_standard(&a, &g).unwrap());
            let scale = ql.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (x, y) in ql.iter().zip(&jac) {
                assert!((x - y).abs() <= 1e-10 * scale, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn rejects_indefinite_gram() {
        let a = DMatrix::identity(2, 2);
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(dense_generalized_eig(&a, &g), Err(LinalgError::NotSpd)));
    }
}
