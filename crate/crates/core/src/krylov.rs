//! Preconditioned conjugate gradients and Lanczos eigenvalue estimates.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::dot;
use crate::error::{Result, SgfError};
use crate::factor::Preconditioner;
use crate::sparse::CsrMatrix;

pub const DEFAULT_MAXIT: usize = 5000;
pub const RESIDUAL_REFRESH: usize = 50;

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        CsrMatrix::dim(self)
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matvec(x)
    }
}

pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

/// `A_ℓ⁻¹` of a factorization.
pub struct InverseOf<'a>(pub &'a Preconditioner);

impl LinearOperator for InverseOf<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.0.apply_inverse(x).expect("length checked by the caller")
    }
}

/// `F⁻¹·A·F⁻ᵀ`, similar to `A_ℓ⁻¹A` but symmetric.
pub struct Preconditioned<'a> {
    pub a: &'a CsrMatrix,
    pub p: &'a Preconditioner,
}

impl LinearOperator for Preconditioned<'_> {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let y = self.p.solve_backward(x).expect("length checked by the caller");
        self.p.solve_forward(&self.a.matvec(&y)).expect("length checked by the caller")
    }
}

pub struct FnOperator<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64>> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub wall_time: f64,
    pub final_rel_residual: f64,
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn true_residual(a: &dyn LinearOperator, b: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = a.apply(x);
    b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect()
}

/// Solves `A·x = b` from a zero initial guess.
pub fn pcg(
    a: &dyn LinearOperator,
    b: &[f64],
    m: &dyn LinearOperator,
    tol: f64,
    maxit: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    let start = Instant::now();
    let n = b.len();
    if a.dim() != n || m.dim() != n {
        return Err(SgfError::ShapeMismatch(format!("operator {} / preconditioner {} / rhs {n}", a.dim(), m.dim())));
    }
    if !(tol > 0.0) {
        return Err(SgfError::Config(format!("tolerance must be positive, got {tol}")));
    }
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        let report = SolveReport {
            iterations: 0,
            residual_history: vec![0.0],
            converged: true,
            wall_time: start.elapsed().as_secs_f64(),
            final_rel_residual: 0.0,
        };
        return Ok((x, report));
    }
    let mut r = b.to_vec();
    let mut z = m.apply(&r);
    let mut rz = dot(&r, &z);
    if !(rz > 0.0) {
        return Err(SgfError::IndefiniteDetected(format!("rᵀz = {rz:e} at iteration 0")));
    }
    let mut p = z.clone();
    let mut history = vec![1.0];
    let mut converged = false;
    let mut final_rel = 1.0;
    let mut k = 0;
    while k < maxit {
        k += 1;
        let q = a.apply(&p);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(SgfError::IndefiniteDetected(format!("pᵀAp = {pq:e} at iteration {k}")));
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let mut refreshed = false;
        if k % RESIDUAL_REFRESH == 0 {
            r = true_residual(a, b, &x);
            refreshed = true;
        }
        let mut rel = norm(&r) / bnorm;
        if rel <= tol && !refreshed {
            r = true_residual(a, b, &x);
            rel = norm(&r) / bnorm;
        }
        history.push(rel);
        final_rel = rel;
        if rel <= tol {
            converged = true;
            break;
        }
        z = m.apply(&r);
        let rz_new = dot(&r, &z);
        if !(rz_new > 0.0) {
            return Err(SgfError::IndefiniteDetected(format!("rᵀz = {rz_new:e} at iteration {k}")));
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if !converged {
        final_rel = norm(&true_residual(a, b, &x)) / bnorm;
        if let Some(last) = history.last_mut() {
            *last = final_rel;
        }
    }
    let report = SolveReport {
        iterations: k,
        residual_history: history,
        converged,
        wall_time: start.elapsed().as_secs_f64(),
        final_rel_residual: final_rel,
    };
    Ok((x, report))
}

/// Number of eigenvalues of the symmetric tridiagonal `(alpha, beta)` below `x`.
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..alpha.len() {
        let b2 = if i > 0 { beta[i - 1] * beta[i - 1] } else { 0.0 };
        d = alpha[i] - x - if i > 0 { b2 / d } else { 0.0 };
        if d == 0.0 {
            d = -f64::EPSILON * (alpha[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// `k`-th smallest eigenvalue (0-based) of a symmetric tridiagonal by bisection.
pub fn tridiagonal_eigenvalue(alpha: &[f64], beta: &[f64], k: usize) -> f64 {
    let m = alpha.len();
    assert!(k < m && beta.len() + 1 >= m);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 } + if i + 1 < m { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(alpha, beta, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Lanczos with full reorthogonalization; returns `(λ_max, λ_min)` Ritz estimates.
pub fn estimate_extreme_eigs(op: &dyn LinearOperator, iters: usize) -> Result<(f64, f64)> {
    let n = op.dim();
    if n == 0 || iters == 0 {
        return Err(SgfError::Config("eigenvalue estimate needs a nonempty operator and iters ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    for j in 0..iters.min(n) {
        let mut w = op.apply(&v);
        let a = dot(&w, &v);
        if !(a > 0.0) {
            return Err(SgfError::IndefiniteDetected(format!("Lanczos step {j}: vᵀAv = {a:e}")));
        }
        alpha.push(a);
        basis.push(v);
        for _ in 0..2 {
            for u in &basis {
                let c = dot(&w, u);
                w.iter_mut().zip(u).for_each(|(wi, ui)| *wi -= c * ui);
            }
        }
        let b = norm(&w);
        if b <= 1e-12 * a.abs() || j + 1 == iters.min(n) {
            break;
        }
        beta.push(b);
        v = w.into_iter().map(|x| x / b).collect();
    }
    let m = alpha.len();
    beta.truncate(m.saturating_sub(1));
    Ok((tridiagonal_eigenvalue(&alpha, &beta, m - 1), tridiagonal_eigenvalue(&alpha, &beta, 0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(d: &[f64]) -> CsrMatrix {
        CsrMatrix::from_triplets(d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect()).unwrap()
    }

    #[test]
    fn identity_converges_in_one_step() {
        let b = vec![1.0, -2.0, 3.0];
        let (x, rep) = pcg(&Identity(3), &b, &Identity(3), 1e-12, 10).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        assert_eq!(rep.residual_history.len(), 2);
        assert_eq!(x, b);
    }

    #[test]
    fn zero_rhs() {
        let (x, rep) = pcg(&Identity(2), &[0.0, 0.0], &Identity(2), 1e-10, 10).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
        assert_eq!(rep.residual_history, vec![0.0]);
    }

    #[test]
    fn detects_indefinite() {
        let a = diag(&[1.0, -1.0]);
        assert!(matches!(pcg(&a, &[1.0, 1.0], &Identity(2), 1e-10, 10), Err(SgfError::IndefiniteDetected(_))));
    }

    #[test]
    fn reported_residual_is_true_residual() {
        let a = diag(&(1..=50).map(|i| i as f64).collect::<Vec<_>>());
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin() + 0.1).collect();
        let (x, rep) = pcg(&a, &b, &Identity(50), 1e-10, 200).unwrap();
        assert!(rep.converged && rep.final_rel_residual <= 1e-10);
        let r = norm(&true_residual(&a, &b, &x)) / norm(&b);
        assert!((r - rep.final_rel_residual).abs() < 1e-12);
    }

    #[test]
    fn lanczos_extremes() {
        let (hi, lo) = estimate_extreme_eigs(&Identity(20), 5).unwrap();
        assert!((hi - 1.0).abs() < 1e-12 && (lo - 1.0).abs() < 1e-12);
        let a = diag(&(1..=10).map(|i| i as f64).collect::<Vec<_>>());
        let (hi, lo) = estimate_extreme_eigs(&a, 10).unwrap();
        assert!((hi - 10.0).abs() < 1e-10 && (lo - 1.0).abs() < 1e-10, "{hi} {lo}");
        assert!(matches!(estimate_extreme_eigs(&diag(&[-1.0, -3.0]), 2), Err(SgfError::IndefiniteDetected(_))));
    }

    #[test]
    fn sturm_bisection() {
        // tridiag(-1, 2, -1) of size 5: 2 − 2cos(kπ/6)
        let alpha = vec![2.0; 5];
        let beta = vec![-1.0; 4];
        for k in 0..5 {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / 6.0).cos();
            assert!((tridiagonal_eigenvalue(&alpha, &beta, k) - exact).abs() < 1e-13);
        }
    }
}
