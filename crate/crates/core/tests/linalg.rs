use dpg_core::linalg::mmio::{read_matrix_market, write_matrix_market};
use dpg_core::linalg::{pcg, CsrMatrix, IdentityOperator, PcgOptions, TripletBuilder};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn triplets(max: usize) -> impl Strategy<Value = (usize, usize, Vec<(usize, usize, f64)>)> {
    (1..max, 1..max).prop_flat_map(|(m, n)| {
        let t = prop::collection::vec((0..m, 0..n, -10.0f64..10.0), 0..3 * m * n);
        (Just(m), Just(n), t)
    })
}

fn dense_of(m: usize, n: usize, t: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m, n);
    for &(i, j, v) in t {
        d[(i, j)] += v;
    }
    d
}

fn close(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    (a - b).abs().max() <= 1e-12 * (1.0 + b.abs().max())
}

proptest! {
    #[test]
    fn triplets_sum_duplicates((m, n, t) in triplets(8)) {
        let a = CsrMatrix::from_triplets(m, n, &t);
        prop_assert!(close(&a.to_dense(), &dense_of(m, n, &t)));
        let mut b = TripletBuilder::new(m, n);
        for &(i, j, v) in &t {
            b.push(i, j, v);
        }
        prop_assert!(close(&b.build().to_dense(), &a.to_dense()));
    }

    #[test]
    fn products_match_dense((m, n, t) in triplets(7), x in prop::collection::vec(-1.0f64..1.0, 7)) {
        let a = CsrMatrix::from_triplets(m, n, &t);
        let d = a.to_dense();
        let y = a.mul_vec(&x[..n]);
        let yd = &d * nalgebra::DVector::from_column_slice(&x[..n]);
        prop_assert!(y.iter().zip(yd.iter()).all(|(p, q)| (p - q).abs() <= 1e-12 * (1.0 + q.abs())));
        let mut z = vec![0.0; n];
        a.matvec_transpose(&x[..m], &mut z);
        let zd = d.transpose() * nalgebra::DVector::from_column_slice(&x[..m]);
        prop_assert!(z.iter().zip(zd.iter()).all(|(p, q)| (p - q).abs() <= 1e-12 * (1.0 + q.abs())));
        prop_assert!(close(&a.transpose().to_dense(), &d.transpose()));
        prop_assert!(close(&a.transpose().matmul(&a).to_dense(), &(d.transpose() * &d)));
    }

    #[test]
    fn ptap_and_submatrix_match_dense((m, n, t) in triplets(7), rows in prop::collection::vec(0usize..7, 1..5)) {
        let p = CsrMatrix::from_triplets(m, n, &t);
        let sym: Vec<_> = t.iter().filter(|e| e.1 < m).flat_map(|&(i, j, v)| [(i, j, v), (j, i, v)]).collect();
        let a = CsrMatrix::from_triplets(m, m, &sym);
        let pd = p.to_dense();
        prop_assert!(close(&a.ptap(&p).to_dense(), &(pd.transpose() * a.to_dense() * &pd)));
        let rows: Vec<usize> = rows.into_iter().filter(|&r| r < m).collect();
        let cols: Vec<usize> = (0..n).rev().collect();
        let s = p.submatrix(&rows, &cols).to_dense();
        for (a, &r) in rows.iter().enumerate() {
            for (b, &c) in cols.iter().enumerate() {
                prop_assert_eq!(s[(a, b)], pd[(r, c)]);
            }
        }
    }

    #[test]
    fn matrix_market_round_trip((m, n, t) in triplets(6)) {
        let a = CsrMatrix::from_triplets(m, n, &t);
        let dir = std::env::temp_dir().join(format!("dpg-mm-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.mtx");
        write_matrix_market(&path, &a).unwrap();
        let b = read_matrix_market(&path).unwrap();
        prop_assert_eq!((b.nrows(), b.ncols()), (m, n));
        prop_assert_eq!(b.to_dense(), a.to_dense());
    }

    #[test]
    fn pcg_solves_random_spd(n in 1usize..25, seed in any::<u64>()) {
        let mut s = seed | 1;
        let mut next = || { s ^= s << 13; s ^= s >> 7; s ^= s << 17; (s % 2000) as f64 / 1000.0 - 1.0 };
        let x = DMatrix::from_fn(n, n, |_, _| next());
        let d = &x * x.transpose() + DMatrix::identity(n, n);
        let a = CsrMatrix::from_dense(&d, 0.0);
        let b: Vec<f64> = (0..n).map(|_| next()).collect();
        let (sol, rep) = pcg(&a, &IdentityOperator(n), &b, &PcgOptions { rtol: 1e-10, maxit: 10 * n + 10 }).unwrap();
        prop_assert!(rep.converged);
        let r = a.mul_vec(&sol);
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rn = r.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        prop_assert!(rn <= 1e-8 * bn.max(1e-300) || bn == 0.0);
    }
}
