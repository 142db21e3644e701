use nalgebra::DMatrix;
use proptest::prelude::*;

use sgf::bench::{run, ModeKind, ProblemSpec, RunConfig};
use sgf::factor::{factorize, CompressionMode, Degree, FactorOptions, Scheme};
use sgf::krylov::{estimate_extreme_eigs, pcg, FnOperator, Identity, InverseOf, LinearOperator, Preconditioned};
use sgf::problems::{poisson7_unit, random_rhs};
use sgf::sparse::CsrMatrix;
use sgf::SgfError;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn diag(d: &[f64]) -> CsrMatrix {
    CsrMatrix::from_triplets(d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect()).unwrap()
}

#[test]
fn exact_preconditioner_converges_immediately() {
    let p = poisson7_unit(11).unwrap();
    let opts = FactorOptions::new(Scheme::NestAllAll, Degree::Constant).with_mode(CompressionMode::Exact);
    let pc = factorize(&p, opts).unwrap();
    let b = random_rhs(p.dim(), 3);
    let (_, rep) = pcg(&p.matrix, &b, &InverseOf(&pc), 1e-10, 100).unwrap();
    assert!(rep.converged);
    assert!(rep.iterations <= 2);
}

#[test]
fn lanczos_on_known_spectra() {
    let (hi, lo) = estimate_extreme_eigs(&Identity(40), 20).unwrap();
    assert!((hi - 1.0).abs() < 1e-12 && (lo - 1.0).abs() < 1e-12);
    let d: Vec<f64> = (1..=10).map(f64::from).collect();
    let (hi, lo) = estimate_extreme_eigs(&diag(&d), 10).unwrap();
    assert!((hi - 10.0).abs() < 1e-8);
    assert!((lo - 1.0).abs() < 1e-8);
}

#[test]
fn lanczos_matches_dense_spectrum() {
    let p = poisson7_unit(5).unwrap();
    let mut m = DMatrix::zeros(p.dim(), p.dim());
    for (i, j, v) in p.matrix.iter() {
        m[(i, j)] = v;
    }
    let eig = m.symmetric_eigenvalues();
    let (hi, lo) = estimate_extreme_eigs(&p.matrix, p.dim()).unwrap();
    assert!((hi - eig.max()).abs() <= 1e-8 * eig.max());
    assert!((lo - eig.min()).abs() <= 1e-8 * eig.max());
}

#[test]
fn preconditioning_reduces_the_condition_number() {
    let p = poisson7_unit(24).unwrap();
    let (hi, _) = estimate_extreme_eigs(&p.matrix, 60).unwrap();
    let exact =
        factorize(&p, FactorOptions::new(Scheme::NestAllAll, Degree::Constant).with_mode(CompressionMode::Exact))
            .unwrap();
    let (inv_hi, _) = estimate_extreme_eigs(&InverseOf(&exact), 60).unwrap();
    let kappa_a = hi * inv_hi;

    let pc = factorize(&p, FactorOptions::new(Scheme::Nest22, Degree::Quadratic)).unwrap();
    let (phi, plo) = estimate_extreme_eigs(&Preconditioned { a: &p.matrix, p: &pc }, 80).unwrap();
    let kappa_p = phi / plo;
    assert!(kappa_p <= kappa_a / 100.0, "κ(A) {kappa_a:e}, κ(P⁻¹A) {kappa_p:e}");
}

#[test]
fn report_is_consistent_with_the_solution() {
    let mut c = RunConfig::new(ProblemSpec::darcy(12, 1e4), Scheme::NestAllAll, 1);
    c.seed = 5;
    let out = run(&c).unwrap();
    let rep = &out.report;
    assert!(rep.converged);
    assert_eq!(rep.residual_history.len(), rep.iterations + 1);
    assert_eq!(rep.residual_history[0], 1.0);
    let problem = c.problem.build().unwrap();
    let b = random_rhs(problem.dim(), 5);
    let ax = problem.matrix.matvec(&out.solution);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(x, y)| x - y).collect();
    let rel = norm(&r) / norm(&b);
    assert!((rel - rep.final_rel_residual).abs() <= 1e-12);
    assert!(rel <= 1e-10);
}

#[test]
fn maxit_bounds_the_iterations() {
    let p = poisson7_unit(16).unwrap();
    let b = random_rhs(p.dim(), 0);
    let (x, rep) = pcg(&p.matrix, &b, &Identity(p.dim()), 1e-10, 7).unwrap();
    assert!(!rep.converged);
    assert_eq!(rep.iterations, 7);
    assert_eq!(rep.residual_history.len(), 8);
    let ax = p.matrix.matvec(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(u, v)| u - v).collect();
    assert!((norm(&r) / norm(&b) - rep.final_rel_residual).abs() <= 1e-12);
}

#[test]
fn indefinite_operators_are_detected() {
    let a = diag(&[1.0, 2.0, -3.0, 4.0]);
    let b = vec![1.0; 4];
    assert!(matches!(pcg(&a, &b, &Identity(4), 1e-10, 20), Err(SgfError::IndefiniteDetected(_))));
    let neg = FnOperator { dim: 4, f: |x: &[f64]| x.iter().map(|v| -v).collect() };
    assert!(matches!(pcg(&Identity(4), &b, &neg, 1e-10, 20), Err(SgfError::IndefiniteDetected(_))));
    assert!(matches!(estimate_extreme_eigs(&neg, 3), Err(SgfError::IndefiniteDetected(_))));
}

#[test]
fn shape_and_tolerance_errors() {
    let a = diag(&[1.0, 2.0]);
    assert!(matches!(pcg(&a, &[1.0; 3], &Identity(3), 1e-10, 5), Err(SgfError::ShapeMismatch(_))));
    assert!(matches!(pcg(&a, &[1.0; 2], &Identity(2), 0.0, 5), Err(SgfError::Config(_))));
    assert!(estimate_extreme_eigs(&Identity(0), 5).is_err());
}

#[test]
fn lowrank_mode_via_run_reads_the_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ranks.json");
    let mut c = RunConfig::new(ProblemSpec::poisson(16), Scheme::Nest2All, 1);
    let poly = run(&c).unwrap();
    poly.trace.write(&path).unwrap();
    c.mode = ModeKind::LowrankEquiv;
    c.rank_trace = Some(path);
    let lr = run(&c).unwrap();
    assert_eq!(lr.trace, poly.trace);
    assert!(lr.report.converged);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pcg_solves_random_spd_systems(n in 1usize..30, seed in any::<u64>()) {
        let mut state = seed | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 2001) as f64 / 1000.0 - 1.0
        };
        let b0 = DMatrix::from_fn(n, n, |_, _| next());
        let m = b0.transpose() * &b0 + DMatrix::identity(n, n);
        let a = CsrMatrix::from_triplets(n, (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (i, j, m[(i, j)])).collect()).unwrap();
        let b: Vec<f64> = (0..n).map(|_| next()).collect();
        let (x, rep) = pcg(&a, &b, &Identity(n), 1e-10, 10 * n + 10).unwrap();
        prop_assert!(rep.converged);
        prop_assert_eq!(rep.residual_history.len(), rep.iterations + 1);
        let ax = a.apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(u, v)| u - v).collect();
        prop_assert!(norm(&r) <= 1e-10 * norm(&b) * 1.0001);
    }
}
