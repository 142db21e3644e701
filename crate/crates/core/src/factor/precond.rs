//! Elementary factors and the assembled preconditioner `A_ℓ = F·Fᵀ`.
//!
//! All factors act on one working vector of length `n` indexed by slots. A
//! node's active unknowns live at a list of slots; after a compression the
//! retained variables occupy the first `r` slots of the node's list and the
//! rest are frozen with an identity pivot.

use serde::Serialize;

use crate::dense::{CholeskyFactor, DenseMatrix};
use crate::error::{Result, SgfError};
use crate::grid::CellId;

use super::trace::RankTrace;

#[derive(Clone, Debug)]
pub struct Coupling {
    pub neighbor: CellId,
    pub slots: Vec<usize>,
    /// `L⁻¹·A_{BN}`, i.e. the transpose of `E_N = A_{NB}·L⁻ᵀ`.
    pub e_t: DenseMatrix,
}

#[derive(Clone, Debug)]
pub enum ElementaryFactor {
    Elimination { level: usize, node: CellId, slots: Vec<usize>, l: CholeskyFactor, couplings: Vec<Coupling> },
    Compression { level: usize, node: CellId, slots: Vec<usize>, l: CholeskyFactor, q: DenseMatrix, retained: usize },
    FinalDense { perm: Vec<usize>, l: CholeskyFactor },
}

fn gather(x: &[f64], slots: &[usize]) -> Vec<f64> {
    slots.iter().map(|&s| x[s]).collect()
}

fn scatter(x: &mut [f64], slots: &[usize], v: &[f64]) {
    for (&s, &val) in slots.iter().zip(v) {
        x[s] = val;
    }
}

impl ElementaryFactor {
    /// `x ← F⁻¹x`.
    pub fn solve_forward(&self, x: &mut [f64]) {
        match self {
            ElementaryFactor::Elimination { slots, l, couplings, .. } => {
                let mut xb = gather(x, slots);
                l.solve_l_vec(&mut xb);
                scatter(x, slots, &xb);
                for c in couplings {
                    let mut xn = gather(x, &c.slots);
                    c.e_t.tr_matvec_acc(-1.0, &xb, &mut xn);
                    scatter(x, &c.slots, &xn);
                }
            }
            ElementaryFactor::Compression { slots, l, q, .. } => {
                let mut xb = gather(x, slots);
                l.solve_l_vec(&mut xb);
                scatter(x, slots, &q.tr_matvec(&xb));
            }
            ElementaryFactor::FinalDense { perm, l } => {
                let mut xb = gather(x, perm);
                l.solve_l_vec(&mut xb);
                scatter(x, perm, &xb);
            }
        }
    }

    /// `x ← F⁻ᵀx`.
    pub fn solve_backward(&self, x: &mut [f64]) {
        match self {
            ElementaryFactor::Elimination { slots, l, couplings, .. } => {
                let mut xb = gather(x, slots);
                for c in couplings {
                    let xn = gather(x, &c.slots);
                    c.e_t.matvec_acc(-1.0, &xn, &mut xb);
                }
                l.solve_lt_vec(&mut xb);
                scatter(x, slots, &xb);
            }
            ElementaryFactor::Compression { slots, l, q, .. } => {
                let mut xb = q.matvec(&gather(x, slots));
                l.solve_lt_vec(&mut xb);
                scatter(x, slots, &xb);
            }
            ElementaryFactor::FinalDense { perm, l } => {
                let mut xb = gather(x, perm);
                l.solve_lt_vec(&mut xb);
                scatter(x, perm, &xb);
            }
        }
    }

    /// `x ← Fᵀx`.
    pub fn mul_transpose(&self, x: &mut [f64]) {
        match self {
            ElementaryFactor::Elimination { slots, l, couplings, .. } => {
                let mut xb = gather(x, slots);
                l.mul_lt_vec(&mut xb);
                for c in couplings {
                    let xn = gather(x, &c.slots);
                    c.e_t.matvec_acc(1.0, &xn, &mut xb);
                }
                scatter(x, slots, &xb);
            }
            ElementaryFactor::Compression { slots, l, q, .. } => {
                let mut xb = gather(x, slots);
                l.mul_lt_vec(&mut xb);
                scatter(x, slots, &q.tr_matvec(&xb));
            }
            ElementaryFactor::FinalDense { perm, l } => {
                let mut xb = gather(x, perm);
                l.mul_lt_vec(&mut xb);
                scatter(x, perm, &xb);
            }
        }
    }

    /// `x ← F·x`.
    pub fn mul(&self, x: &mut [f64]) {
        match self {
            ElementaryFactor::Elimination { slots, l, couplings, .. } => {
                let xb0 = gather(x, slots);
                for c in couplings {
                    let mut xn = gather(x, &c.slots);
                    c.e_t.tr_matvec_acc(1.0, &xb0, &mut xn);
                    scatter(x, &c.slots, &xn);
                }
                let mut xb = xb0;
                l.mul_l_vec(&mut xb);
                scatter(x, slots, &xb);
            }
            ElementaryFactor::Compression { slots, l, q, .. } => {
                let mut xb = q.matvec(&gather(x, slots));
                l.mul_l_vec(&mut xb);
                scatter(x, slots, &xb);
            }
            ElementaryFactor::FinalDense { perm, l } => {
                let mut xb = gather(x, perm);
                l.mul_l_vec(&mut xb);
                scatter(x, perm, &xb);
            }
        }
    }

    /// Flops of one forward or backward application.
    pub fn apply_flops(&self) -> u64 {
        let sq = |m: usize| (m * m) as u64;
        match self {
            ElementaryFactor::Elimination { slots, couplings, .. } => {
                sq(slots.len()) + couplings.iter().map(|c| 2 * (c.e_t.rows() * c.e_t.cols()) as u64).sum::<u64>()
            }
            ElementaryFactor::Compression { slots, .. } => 3 * sq(slots.len()),
            ElementaryFactor::FinalDense { perm, .. } => sq(perm.len()),
        }
    }

    pub fn stored_values(&self) -> usize {
        let tri = |m: usize| m * (m + 1) / 2;
        match self {
            ElementaryFactor::Elimination { slots, couplings, .. } => {
                tri(slots.len()) + couplings.iter().map(|c| c.e_t.rows() * c.e_t.cols()).sum::<usize>()
            }
            ElementaryFactor::Compression { slots, .. } => tri(slots.len()) + slots.len() * slots.len(),
            ElementaryFactor::FinalDense { perm, .. } => tri(perm.len()),
        }
    }
}

/// Per-level summary of the factorization.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LevelStats {
    pub level: usize,
    pub nodes: usize,
    pub active_unknowns: usize,
    pub max_active: usize,
    pub eliminated_nodes: usize,
    pub compressed_nodes: usize,
    pub retained_ranks: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FactorStats {
    pub flops_factorize: u64,
    pub peak_blocks_bytes: usize,
    /// Largest retained rank produced by a compression (0 if nothing was compressed).
    pub max_node_size: usize,
    /// Largest active node size met at the start of any level.
    pub max_active_size: usize,
    pub levels: usize,
    pub final_dense_size: usize,
    pub per_level: Vec<LevelStats>,
}

#[derive(Clone, Debug)]
pub struct Preconditioner {
    pub(crate) n: usize,
    pub(crate) factors: Vec<ElementaryFactor>,
    pub(crate) stats: FactorStats,
    pub(crate) trace: RankTrace,
}

/// Metadata exported for reports.
#[derive(Clone, Debug, Serialize)]
pub struct PreconditionerInfo<'a> {
    pub n: usize,
    pub num_factors: usize,
    pub stored_values: usize,
    pub flops_apply: u64,
    pub stats: &'a FactorStats,
}

impl Preconditioner {
    pub fn new(n: usize, factors: Vec<ElementaryFactor>, stats: FactorStats, trace: RankTrace) -> Self {
        Self { n, factors, stats, trace }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factors(&self) -> &[ElementaryFactor] {
        &self.factors
    }

    pub fn stats(&self) -> &FactorStats {
        &self.stats
    }

    /// Ranks chosen by the compressions of this factorization.
    pub fn rank_trace(&self) -> &RankTrace {
        &self.trace
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(SgfError::ShapeMismatch(format!(
                "vector of length {} for operator of size {}",
                x.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// `F⁻¹x`.
    pub fn solve_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut w = x.to_vec();
        for f in &self.factors {
            f.solve_forward(&mut w);
        }
        Ok(w)
    }

    /// `F⁻ᵀx`.
    pub fn solve_backward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut w = x.to_vec();
        for f in self.factors.iter().rev() {
            f.solve_backward(&mut w);
        }
        Ok(w)
    }

    /// `A_ℓ⁻¹x`.
    pub fn apply_inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.solve_forward(x)?;
        self.solve_backward(&y)
    }

    /// `A_ℓ·x`.
    pub fn apply_operator(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut w = x.to_vec();
        for f in &self.factors {
            f.mul_transpose(&mut w);
        }
        for f in self.factors.iter().rev() {
            f.mul(&mut w);
        }
        Ok(w)
    }

    /// Flops of one `apply_inverse`.
    pub fn flops_apply(&self) -> u64 {
        2 * self.factors.iter().map(ElementaryFactor::apply_flops).sum::<u64>()
    }

    pub fn stored_values(&self) -> usize {
        self.factors.iter().map(ElementaryFactor::stored_values).sum()
    }

    pub fn info(&self) -> PreconditionerInfo<'_> {
        PreconditionerInfo {
            n: self.n,
            num_factors: self.factors.len(),
            stored_values: self.stored_values(),
            flops_apply: self.flops_apply(),
            stats: &self.stats,
        }
    }

    pub fn metadata_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.info())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::cholesky;

    fn spd(n: usize, seed: f64) -> DenseMatrix {
        let b = DenseMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) as f64 * seed).sin());
        let mut a = b.tr_matmul(&b);
        for i in 0..n {
            a.add_to(i, i, n as f64);
        }
        a
    }

    fn rnd(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 13 + 5) as f64).cos()).collect()
    }

    #[test]
    fn factor_inverses_are_consistent() {
        let l = cholesky(&spd(3, 0.7)).unwrap();
        let q = {
            let (q, _) = crate::dense::range_basis(&spd(3, 1.3), 1e-12, Some(3));
            q
        };
        let factors = vec![
            ElementaryFactor::Elimination {
                level: 0,
                node: 0,
                slots: vec![4, 1, 2],
                l: l.clone(),
                couplings: vec![Coupling {
                    neighbor: 1,
                    slots: vec![0, 3],
                    e_t: DenseMatrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64 * 0.1),
                }],
            },
            ElementaryFactor::Compression { level: 0, node: 1, slots: vec![3, 0, 5], l: l.clone(), q, retained: 1 },
            ElementaryFactor::FinalDense { perm: vec![5, 3], l: cholesky(&spd(2, 0.4)).unwrap() },
        ];
        for f in &factors {
            let x = rnd(6);
            let mut y = x.clone();
            f.mul(&mut y);
            f.solve_forward(&mut y);
            let mut z = x.clone();
            f.mul_transpose(&mut z);
            f.solve_backward(&mut z);
            for i in 0..6 {
                assert!((y[i] - x[i]).abs() < 1e-12);
                assert!((z[i] - x[i]).abs() < 1e-12);
            }
        }
        let p = Preconditioner::new(6, factors, FactorStats::default(), RankTrace::default());
        let x = rnd(6);
        let back = p.apply_operator(&p.apply_inverse(&x).unwrap()).unwrap();
        for i in 0..6 {
            assert!((back[i] - x[i]).abs() < 1e-11);
        }
        assert!(p.apply_inverse(&[1.0]).is_err());
    }
}
