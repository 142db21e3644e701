use nalgebra::DMatrix;
use proptest::prelude::*;

use sgf::dense::{cholesky, pivoted_qr, range_basis, tri_solve, DenseMatrix, TriMode};
use sgf::SgfError;

fn to_na(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| a.get(i, j))
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-1.0f64..1.0, rows * cols)
        .prop_map(move |v| DenseMatrix::from_row_major(rows, cols, v).unwrap())
}

fn spd(n: usize) -> impl Strategy<Value = DenseMatrix> {
    matrix(n, n).prop_map(move |b| {
        let mut a = b.tr_matmul(&b);
        for i in 0..n {
            a.add_to(i, i, 0.1);
        }
        a.symmetrize();
        a
    })
}

fn sized_spd() -> impl Strategy<Value = DenseMatrix> {
    (1usize..24).prop_flat_map(spd)
}

#[test]
fn cholesky_matches_nalgebra() {
    let b = DenseMatrix::from_fn(9, 9, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + if i == j { 6.0 } else { 0.0 });
    let a = b.tr_matmul(&b);
    let ours = to_na(cholesky(&a).unwrap().l());
    let theirs = to_na(&a).cholesky().unwrap().l();
    assert!((ours - theirs).amax() <= 1e-12 * a.max_abs());
}

#[test]
fn tri_solve_matches_nalgebra() {
    let b = DenseMatrix::from_fn(7, 7, |i, j| {
        (1.0 + i as f64 * 0.3 - j as f64 * 0.2).sin() + if i == j { 4.0 } else { 0.0 }
    });
    let a = b.tr_matmul(&b);
    let f = cholesky(&a).unwrap();
    let l = to_na(f.l());
    let rhs = DenseMatrix::from_fn(7, 3, |i, j| (i as f64 - j as f64).cos());
    let r = to_na(&rhs);
    let left = to_na(&tri_solve(&f, &rhs, TriMode::LeftL).unwrap());
    assert!((left - l.solve_lower_triangular(&r).unwrap()).amax() < 1e-12);
    let left_t = to_na(&tri_solve(&f, &rhs, TriMode::LeftLt).unwrap());
    assert!((left_t - l.transpose().solve_upper_triangular(&r).unwrap()).amax() < 1e-12);
    let rt = rhs.transpose();
    let right = to_na(&tri_solve(&f, &rt, TriMode::RightLt).unwrap());
    let expect = l.solve_lower_triangular(&r).unwrap().transpose();
    assert!((right - expect).amax() < 1e-12);
}

#[test]
fn qr_rank_matches_svd_rank() {
    // rank 3 built from explicit factors
    let u = DenseMatrix::from_fn(10, 3, |i, j| (0.3 * (i + 1) as f64).powi(j as i32));
    let v = DenseMatrix::from_fn(3, 6, |i, j| (0.5 * (j + 1) as f64).powi(i as i32));
    let a = u.matmul(&v);
    let qr = pivoted_qr(&a, 1e-10);
    let svd = to_na(&a).svd(false, false);
    let s0 = svd.singular_values[0];
    let svd_rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * s0).count();
    assert_eq!(qr.rank, 3);
    assert_eq!(qr.rank, svd_rank);
}

#[test]
fn qr_examples() {
    assert_eq!(pivoted_qr(&DenseMatrix::identity(3), 1e-12).rank, 3);
    let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).unwrap();
    assert_eq!(pivoted_qr(&a, 1e-12).rank, 1);
    assert_eq!(pivoted_qr(&DenseMatrix::zeros(4, 0), 1e-12).rank, 0);
    assert_eq!(pivoted_qr(&DenseMatrix::zeros(3, 2), 1e-12).rank, 0);
}

#[test]
fn cholesky_errors() {
    let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
    assert!(matches!(cholesky(&a), Err(SgfError::NotSpd { .. })));
    assert!(matches!(cholesky(&DenseMatrix::zeros(2, 3)), Err(SgfError::ShapeMismatch(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cholesky_reconstructs(a in sized_spd()) {
        let f = cholesky(&a).unwrap();
        let l = f.l();
        let rec = l.matmul_tr(l);
        prop_assert!(rec.sub(&a).max_abs() <= 1e-11 * a.max_abs());
        for i in 0..l.rows() {
            prop_assert!(l.get(i, i) > 0.0);
            for j in i + 1..l.cols() {
                prop_assert_eq!(l.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn tri_solve_then_multiply_is_identity(a in (1usize..40).prop_flat_map(spd), k in 1usize..6, seed in 0u64..100) {
        let n = a.rows();
        let f = cholesky(&a).unwrap();
        let b = DenseMatrix::from_fn(n, k, |i, j| ((i * 31 + j * 17 + seed as usize) % 13) as f64 / 6.0 - 1.0);
        let x = tri_solve(&f, &b, TriMode::LeftL).unwrap();
        let back = f.l().matmul(&x);
        prop_assert!(back.sub(&b).max_abs() <= 1e-12 * b.max_abs().max(1.0) * (n as f64));
        let y = tri_solve(&f, &b, TriMode::LeftLt).unwrap();
        let back = f.l().tr_matmul(&y);
        prop_assert!(back.sub(&b).max_abs() <= 1e-12 * b.max_abs().max(1.0) * (n as f64));
    }

    #[test]
    fn qr_factors_and_spans(rows in 1usize..20, cols in 1usize..20, seed in any::<u64>()) {
        let mut state = seed | 1;
        let a = DenseMatrix::from_fn(rows, cols, |_, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 2001) as f64 / 1000.0 - 1.0
        });
        let tol = 1e-10;
        let qr = pivoted_qr(&a, tol);
        let k = rows.min(cols);
        let qtq = qr.q.tr_matmul(&qr.q);
        prop_assert!(qtq.sub(&DenseMatrix::identity(k)).max_abs() <= 1e-12);
        let ap = a.select_columns(&qr.perm);
        let fro = a.frobenius_norm();
        prop_assert!(ap.sub(&qr.q.matmul(&qr.r)).frobenius_norm() <= 1e-12 * fro.max(1.0));
        let q1 = qr.q.leading_columns(qr.rank);
        let residual = a.sub(&q1.matmul(&q1.tr_matmul(&a)));
        prop_assert!(residual.frobenius_norm() <= 10.0 * tol * fro);
        prop_assert_eq!(qr.rank, k.min(to_na(&a).rank(1e-10 * to_na(&a).svd(false, false).singular_values[0])));
    }

    #[test]
    fn range_basis_is_orthogonal_with_forced_split(rows in 1usize..16, cols in 0usize..10, forced in 0usize..20) {
        let a = DenseMatrix::from_fn(rows, cols, |i, j| ((i + 2 * j) as f64).sin());
        let (q, r) = range_basis(&a, 1e-10, Some(forced));
        prop_assert_eq!(r, forced.min(rows));
        prop_assert!(q.tr_matmul(&q).sub(&DenseMatrix::identity(rows)).max_abs() <= 1e-12);
    }
}
