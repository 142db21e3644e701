//! Small dense kernels used on per-node blocks.
//!
//! Everything here is row-major `f64`. Block sizes seen during a
//! factorization are at most a few hundred rows, so the loops are written
//! for cache-friendly access rather than blocked for BLAS-level throughput.

use std::fmt;

use crate::error::{Result, SgfError};

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{}", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            let row: Vec<String> = self.row(i).iter().take(8).map(|v| format!("{v:10.3e}")).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(SgfError::ShapeMismatch(format!(
                "expected {} entries for {rows}x{cols}, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SgfError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(SgfError::ShapeMismatch("ragged rows".into()));
        }
        Self::from_row_major(r, c, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// Copies the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self::from_fn(self.rows, cols.len(), |i, j| self.get(i, cols[j]))
    }

    /// Copies the leading `k` columns.
    pub fn leading_columns(&self, k: usize) -> Self {
        Self::from_fn(self.rows, k, |i, j| self.get(i, j))
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut out = Self::zeros(rows.len(), self.cols);
        for (k, &r) in rows.iter().enumerate() {
            out.row_mut(k).copy_from_slice(self.row(r));
        }
        out
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(parts: &[&DenseMatrix]) -> Result<Self> {
        let cols = parts.first().map_or(0, |p| p.cols);
        if parts.iter().any(|p| p.cols != cols) {
            return Err(SgfError::ShapeMismatch("vstack with differing column counts".into()));
        }
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Self { rows, cols, data })
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn hstack(parts: &[&DenseMatrix]) -> Result<Self> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if parts.iter().any(|p| p.rows != rows) {
            return Err(SgfError::ShapeMismatch("hstack with differing row counts".into()));
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            for i in 0..rows {
                out.row_mut(i)[offset..offset + p.cols].copy_from_slice(p.row(i));
            }
            offset += p.cols;
        }
        Ok(out)
    }

    /// Writes `block` into `self` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &DenseMatrix) {
        for i in 0..block.rows {
            let dst = &mut self.row_mut(r0 + i)[c0..c0 + block.cols];
            dst.copy_from_slice(block.row(i));
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self.get(r0 + i, c0 + j))
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &DenseMatrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `self * other`
    pub fn matmul(&self, other: &DenseMatrix) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        let n = other.cols;
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ * other`
    pub fn tr_matmul(&self, other: &DenseMatrix) -> Self {
        let mut out = Self::zeros(self.cols, other.cols);
        out.tr_matmul_acc(1.0, self, other);
        out
    }

    /// `self += alpha * aᵀ * b`
    pub fn tr_matmul_acc(&mut self, alpha: f64, a: &DenseMatrix, b: &DenseMatrix) {
        assert_eq!(a.rows, b.rows, "tr_matmul shape mismatch");
        assert_eq!(self.shape(), (a.cols, b.cols), "tr_matmul output shape mismatch");
        let n = b.cols;
        for k in 0..a.rows {
            let a_row = a.row(k);
            let b_row = b.row(k);
            for (i, &aki) in a_row.iter().enumerate() {
                if aki == 0.0 {
                    continue;
                }
                let s = alpha * aki;
                let out_row = &mut self.data[i * n..(i + 1) * n];
                for (o, bv) in out_row.iter_mut().zip(b_row) {
                    *o += s * bv;
                }
            }
        }
    }

    /// `self * otherᵀ`
    pub fn matmul_tr(&self, other: &DenseMatrix) -> Self {
        assert_eq!(self.cols, other.cols, "matmul_tr shape mismatch");
        Self::from_fn(self.rows, other.rows, |i, j| dot(self.row(i), other.row(j)))
    }

    /// `y = self * x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `y += alpha * self * x`
    pub fn matvec_acc(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += alpha * dot(self.row(i), x);
        }
    }

    /// `y += alpha * selfᵀ * x`
    pub fn tr_matvec_acc(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let s = alpha * xi;
            for (yj, a) in y.iter_mut().zip(self.row(i)) {
                *yj += s * a;
            }
        }
    }

    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.cols];
        self.tr_matvec_acc(1.0, x, &mut y);
        y
    }

    /// Largest entrywise asymmetry relative to the largest entry.
    pub fn relative_asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    /// Replaces the matrix by its symmetric part.
    pub fn symmetrize(&mut self) {
        let n = self.rows;
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, v);
                self.set(j, i, v);
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = A`.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    l: DenseMatrix,
}

/// Which triangular system [`tri_solve`] solves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TriMode {
    /// `L⁻¹·B`
    LeftL,
    /// `L⁻ᵀ·B`
    LeftLt,
    /// `B·L⁻ᵀ`
    RightLt,
}

/// Pivots below this fraction of the largest diagonal entry are treated as breakdown.
pub const CHOLESKY_PIVOT_FLOOR: f64 = 1e-14;

/// Dense Cholesky factorization of a symmetric positive definite matrix.
pub fn cholesky(a: &DenseMatrix) -> Result<CholeskyFactor> {
    let n = a.rows();
    if a.cols() != n {
        return Err(SgfError::ShapeMismatch(format!("cholesky of {}x{}", a.rows(), a.cols())));
    }
    if n == 0 {
        return Ok(CholeskyFactor { l: DenseMatrix::zeros(0, 0) });
    }
    let max_diag = a.max_diagonal();
    if !(max_diag > 0.0) {
        return Err(SgfError::NotSpd { pivot: 0, value: max_diag });
    }
    let floor = CHOLESKY_PIVOT_FLOOR * max_diag;
    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = a.get(i, j) - dot(&l.row(i)[..j], &l.row(j)[..j]);
            if i == j {
                if !(s > floor) {
                    return Err(SgfError::NotSpd { pivot: i, value: s });
                }
                l.set(i, i, s.sqrt());
            } else {
                let v = s / l.get(j, j);
                l.set(i, j, v);
            }
        }
    }
    Ok(CholeskyFactor { l })
}

impl CholeskyFactor {
    pub fn l(&self) -> &DenseMatrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Wraps an existing lower-triangular matrix; used by tests that need a specific `L`.
    pub fn from_lower(l: DenseMatrix) -> Result<Self> {
        let n = l.rows();
        if l.cols() != n {
            return Err(SgfError::ShapeMismatch("factor must be square".into()));
        }
        for i in 0..n {
            if !(l.get(i, i) > 0.0) {
                return Err(SgfError::NotSpd { pivot: i, value: l.get(i, i) });
            }
            for j in i + 1..n {
                if l.get(i, j) != 0.0 {
                    return Err(SgfError::ShapeMismatch("factor is not lower-triangular".into()));
                }
            }
        }
        Ok(Self { l })
    }

    /// In-place `x ← L⁻¹ x`.
    pub fn solve_l_vec(&self, x: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let row = self.l.row(i);
            let s = x[i] - dot(&row[..i], &x[..i]);
            x[i] = s / row[i];
        }
    }

    /// In-place `x ← L⁻ᵀ x`.
    pub fn solve_lt_vec(&self, x: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            x[i] /= self.l.get(i, i);
            let xi = x[i];
            if xi != 0.0 {
                let row = &self.l.row(i)[..i];
                for (xj, lij) in x[..i].iter_mut().zip(row) {
                    *xj -= lij * xi;
                }
            }
        }
    }

    /// In-place `x ← L x`.
    pub fn mul_l_vec(&self, x: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let row = self.l.row(i);
            x[i] = dot(&row[..=i], &x[..=i]);
        }
    }

    /// In-place `x ← Lᵀ x`.
    pub fn mul_lt_vec(&self, x: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = 0.0;
            for j in i..n {
                s += self.l.get(j, i) * x[j];
            }
            x[i] = s;
        }
    }

    /// `Lᵀ·B`
    pub fn mul_lt(&self, b: &DenseMatrix) -> DenseMatrix {
        self.l.tr_matmul(b)
    }
}

/// Solves one of the triangular systems in [`TriMode`] with the factor `L`.
pub fn tri_solve(factor: &CholeskyFactor, b: &DenseMatrix, mode: TriMode) -> Result<DenseMatrix> {
    let n = factor.dim();
    let l = factor.l();
    match mode {
        TriMode::LeftL | TriMode::LeftLt => {
            if b.rows() != n {
                return Err(SgfError::ShapeMismatch(format!(
                    "triangular solve: factor is {n}x{n}, rhs has {} rows",
                    b.rows()
                )));
            }
            let k = b.cols();
            let mut x = b.clone();
            if mode == TriMode::LeftL {
                for i in 0..n {
                    for j in 0..i {
                        let lij = l.get(i, j);
                        if lij == 0.0 {
                            continue;
                        }
                        let (head, tail) = x.as_mut_slice().split_at_mut(i * k);
                        let src = &head[j * k..(j + 1) * k];
                        for (d, s) in tail[..k].iter_mut().zip(src) {
                            *d -= lij * s;
                        }
                    }
                    let inv = 1.0 / l.get(i, i);
                    x.row_mut(i).iter_mut().for_each(|v| *v *= inv);
                }
            } else {
                for i in (0..n).rev() {
                    let inv = 1.0 / l.get(i, i);
                    x.row_mut(i).iter_mut().for_each(|v| *v *= inv);
                    // push row i's contribution up to rows j < i via L[i][j]
                    let (head, tail) = x.as_mut_slice().split_at_mut(i * k);
                    let src = &tail[..k];
                    for j in 0..i {
                        let lij = l.get(i, j);
                        if lij == 0.0 {
                            continue;
                        }
                        for (d, s) in head[j * k..(j + 1) * k].iter_mut().zip(src) {
                            *d -= lij * s;
                        }
                    }
                }
            }
            Ok(x)
        }
        TriMode::RightLt => {
            if b.cols() != n {
                return Err(SgfError::ShapeMismatch(format!(
                    "right triangular solve: factor is {n}x{n}, rhs has {} cols",
                    b.cols()
                )));
            }
            let mut x = b.clone();
            for r in 0..x.rows() {
                factor.solve_l_vec(x.row_mut(r));
            }
            Ok(x)
        }
    }
}

/// Default relative tolerance for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Column-pivoted Householder QR: `A·P = Q·R`.
#[derive(Clone, Debug)]
pub struct PivotedQR {
    /// `m × k` with orthonormal columns, `k = min(m, cols)`.
    pub q: DenseMatrix,
    /// `k × cols`, upper trapezoidal.
    pub r: DenseMatrix,
    /// `perm[j]` is the original column placed at position `j`.
    pub perm: Vec<usize>,
    pub rank: usize,
    reflectors: Reflectors,
}

impl PivotedQR {
    /// Full `m × m` orthogonal factor whose leading `k` columns equal `q`.
    pub fn full_q(&self) -> DenseMatrix {
        self.reflectors.full_q()
    }
}

#[derive(Clone, Debug)]
struct Reflectors {
    m: usize,
    // (v, tau) with v[0] = 1 implicit at position `step`
    vs: Vec<(Vec<f64>, f64)>,
}

impl Reflectors {
    /// Applies `H_1 H_2 ⋯ H_k` to the columns of `x` (in place, column-major).
    fn apply_q(&self, cols: &mut [Vec<f64>]) {
        for (step, (v, tau)) in self.vs.iter().enumerate().rev() {
            apply_reflector(v, *tau, step, cols);
        }
    }

    fn full_q(&self) -> DenseMatrix {
        let m = self.m;
        let mut cols: Vec<Vec<f64>> = (0..m)
            .map(|j| {
                let mut c = vec![0.0; m];
                c[j] = 1.0;
                c
            })
            .collect();
        self.apply_q(&mut cols);
        columns_to_dense(m, &cols)
    }

    fn thin_q(&self, k: usize) -> DenseMatrix {
        let m = self.m;
        let mut cols: Vec<Vec<f64>> = (0..k)
            .map(|j| {
                let mut c = vec![0.0; m];
                c[j] = 1.0;
                c
            })
            .collect();
        self.apply_q(&mut cols);
        columns_to_dense(m, &cols)
    }
}

fn columns_to_dense(m: usize, cols: &[Vec<f64>]) -> DenseMatrix {
    DenseMatrix::from_fn(m, cols.len(), |i, j| cols[j][i])
}

fn apply_reflector(v: &[f64], tau: f64, step: usize, cols: &mut [Vec<f64>]) {
    if tau == 0.0 {
        return;
    }
    for c in cols.iter_mut() {
        let tail = &mut c[step..];
        let s = tau * dot(v, tail);
        if s != 0.0 {
            for (t, vi) in tail.iter_mut().zip(v) {
                *t -= s * vi;
            }
        }
    }
}

/// Core Householder loop. With `stop_tol = Some(t)` it stops as soon as the
/// largest remaining column norm falls to `t·|R_00|` or below; the returned
/// `R` then has only the computed rows filled in.
fn householder_pivoted(a: &DenseMatrix, stop_tol: Option<f64>) -> (Reflectors, Vec<Vec<f64>>, Vec<usize>, usize) {
    let (m, c) = a.shape();
    let k = m.min(c);
    let mut cols: Vec<Vec<f64>> = (0..c).map(|j| a.column(j)).collect();
    let mut perm: Vec<usize> = (0..c).collect();
    let mut norms: Vec<f64> = cols.iter().map(|col| dot(col, col).sqrt()).collect();
    let mut ref_norms = norms.clone();
    let tol3z = f64::EPSILON.sqrt();
    let mut vs = Vec::with_capacity(k);
    let mut r00 = 0.0;
    let mut steps = 0;
    for step in 0..k {
        let (p, &pmax) = norms[step..]
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .map(|(i, v)| (i + step, v))
            .unwrap();
        if step == 0 {
            r00 = pmax;
        }
        if let Some(t) = stop_tol {
            if pmax <= t * r00 || pmax == 0.0 {
                break;
            }
        }
        if p != step {
            cols.swap(p, step);
            perm.swap(p, step);
            norms.swap(p, step);
            ref_norms.swap(p, step);
        }
        // reflector for column `step`, rows step..m
        let x = &cols[step][step..];
        let alpha = x[0];
        let xnorm = dot(x, x).sqrt();
        let (v, tau, beta) = if xnorm == 0.0 {
            (vec![0.0; m - step], 0.0, 0.0)
        } else {
            let beta = if alpha >= 0.0 { -xnorm } else { xnorm };
            let mut v: Vec<f64> = x.to_vec();
            v[0] = 1.0;
            let scale = 1.0 / (alpha - beta);
            v[1..].iter_mut().for_each(|vi| *vi *= scale);
            ((v), (beta - alpha) / beta, beta)
        };
        {
            let col = &mut cols[step];
            col[step] = beta;
            col[step + 1..].iter_mut().for_each(|e| *e = 0.0);
        }
        apply_reflector(&v, tau, step, &mut cols[step + 1..]);
        // norm downdate with LAPACK-style recomputation on cancellation
        for j in step + 1..c {
            if norms[j] == 0.0 {
                continue;
            }
            let rjj = cols[j][step].abs() / norms[j];
            let temp = (1.0 - rjj * rjj).max(0.0);
            let ratio = norms[j] / ref_norms[j];
            if temp * ratio * ratio <= tol3z {
                let tail = &cols[j][step + 1..];
                norms[j] = dot(tail, tail).sqrt();
                ref_norms[j] = norms[j];
            } else {
                norms[j] *= temp.sqrt();
            }
        }
        vs.push((v, tau));
        steps += 1;
    }
    (Reflectors { m, vs }, cols, perm, steps)
}

fn numerical_rank(diag: impl Iterator<Item = f64>, rank_tol: f64) -> usize {
    let diag: Vec<f64> = diag.map(f64::abs).collect();
    match diag.first() {
        None => 0,
        Some(0.0) => 0,
        Some(&d0) => diag.iter().take_while(|&&d| d > rank_tol * d0).count(),
    }
}

/// Column-pivoted QR with numerical rank relative to `|R_00|`.
pub fn pivoted_qr(a: &DenseMatrix, rank_tol: f64) -> PivotedQR {
    let (m, c) = a.shape();
    let k = m.min(c);
    let (reflectors, cols, perm, _) = householder_pivoted(a, None);
    let r = DenseMatrix::from_fn(k, c, |i, j| if i <= j { cols[j][i] } else { 0.0 });
    let rank = numerical_rank((0..k).map(|i| r.get(i, i)), rank_tol);
    let q = reflectors.thin_q(k);
    PivotedQR { q, r, perm, rank, reflectors }
}

/// Orthogonal basis adapted to the numerical range of `a`.
///
/// Returns the full `m × m` orthogonal `Q` whose leading `rank` columns span
/// the range of `a` up to `rank_tol`, stopping the factorization early once the
/// trailing columns are negligible. If `forced_rank` is given, the split point
/// is that value (clipped to `m`) and the factorization runs to completion.
pub fn range_basis(a: &DenseMatrix, rank_tol: f64, forced_rank: Option<usize>) -> (DenseMatrix, usize) {
    let m = a.rows();
    if a.cols() == 0 || m == 0 {
        return (DenseMatrix::identity(m), forced_rank.unwrap_or(0).min(m));
    }
    let stop = if forced_rank.is_some() { None } else { Some(rank_tol) };
    let (reflectors, _, _, steps) = householder_pivoted(a, stop);
    let rank = match forced_rank {
        Some(r) => r.min(m),
        None => steps,
    };
    (reflectors.full_q(), rank)
}

/// Analytic flop counts for the kernels above, used by the benchmark counters.
pub mod flops {
    pub fn cholesky(m: usize) -> u64 {
        (m as u64).pow(3) / 3
    }

    /// Triangular solve with an `m × m` factor against `k` right-hand sides.
    pub fn tri_solve(m: usize, k: usize) -> u64 {
        (m as u64) * (m as u64) * (k as u64)
    }

    pub fn gemm(m: usize, n: usize, k: usize) -> u64 {
        2 * (m as u64) * (n as u64) * (k as u64)
    }

    /// Householder QR of an `m × c` matrix.
    pub fn qr(m: usize, c: usize) -> u64 {
        2 * (m as u64) * (c as u64) * (c.min(m) as u64)
    }
}
