//! Symmetric block-sparse trailing matrix keyed by node pairs.

use std::collections::{BTreeMap, BTreeSet};

use crate::dense::DenseMatrix;
use crate::error::{Result, SgfError};
use crate::sparse::CsrMatrix;

/// Only blocks `(i, j)` with `i ≤ j` are stored; `(j, i)` is the transpose.
#[derive(Clone, Debug, Default)]
pub struct BlockMatrix {
    sizes: Vec<usize>,
    upper: Vec<BTreeMap<usize, DenseMatrix>>,
    neighbors: Vec<BTreeSet<usize>>,
    live_bytes: usize,
    peak_bytes: usize,
}

fn bytes_of(m: &DenseMatrix) -> usize {
    m.rows() * m.cols() * std::mem::size_of::<f64>()
}

impl BlockMatrix {
    pub fn new(sizes: Vec<usize>) -> Self {
        let k = sizes.len();
        Self {
            sizes,
            upper: vec![BTreeMap::new(); k],
            neighbors: vec![BTreeSet::new(); k],
            live_bytes: 0,
            peak_bytes: 0,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn live_bytes(&self) -> usize {
        self.live_bytes
    }

    pub fn peak_bytes(&self) -> usize {
        self.peak_bytes
    }

    /// Neighbours of `i` (nodes with a stored off-diagonal block), ascending.
    pub fn neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.neighbors[i]
    }

    pub fn num_blocks(&self) -> usize {
        self.upper.iter().map(|m| m.len()).sum()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let (a, b) = (i.min(j), i.max(j));
        self.upper[a].contains_key(&b)
    }

    /// Block `(i, j)`, transposing the stored block when `i > j`. Missing blocks are zero.
    pub fn block(&self, i: usize, j: usize) -> DenseMatrix {
        if i <= j {
            self.upper[i].get(&j).cloned().unwrap_or_else(|| DenseMatrix::zeros(self.sizes[i], self.sizes[j]))
        } else {
            self.upper[j]
                .get(&i)
                .map(|m| m.transpose())
                .unwrap_or_else(|| DenseMatrix::zeros(self.sizes[i], self.sizes[j]))
        }
    }

    /// Stored block for `i ≤ j`.
    pub fn stored(&self, i: usize, j: usize) -> Option<&DenseMatrix> {
        debug_assert!(i <= j);
        self.upper[i].get(&j)
    }

    fn track_insert(&mut self, m: &DenseMatrix) {
        self.live_bytes += bytes_of(m);
        self.peak_bytes = self.peak_bytes.max(self.live_bytes);
    }

    /// Replaces block `(i, j)`; `m` has shape `|i| × |j|`.
    pub fn set_block(&mut self, i: usize, j: usize, m: DenseMatrix) {
        assert_eq!(m.shape(), (self.sizes[i], self.sizes[j]), "block ({i}, {j}) shape");
        let (a, b, m) = if i <= j { (i, j, m) } else { (j, i, m.transpose()) };
        self.track_insert(&m);
        if let Some(old) = self.upper[a].insert(b, m) {
            self.live_bytes -= bytes_of(&old);
        }
        if a != b {
            self.neighbors[a].insert(b);
            self.neighbors[b].insert(a);
        }
    }

    /// Mutable stored block for `i ≤ j`, created as zeros when absent.
    pub fn block_mut(&mut self, i: usize, j: usize) -> &mut DenseMatrix {
        assert!(i <= j);
        if !self.upper[i].contains_key(&j) {
            let z = DenseMatrix::zeros(self.sizes[i], self.sizes[j]);
            self.track_insert(&z);
            self.upper[i].insert(j, z);
            if i != j {
                self.neighbors[i].insert(j);
                self.neighbors[j].insert(i);
            }
        }
        self.upper[i].get_mut(&j).unwrap()
    }

    /// Drops every block touching `i`.
    pub fn remove_node(&mut self, i: usize) {
        for j in std::mem::take(&mut self.neighbors[i]) {
            self.neighbors[j].remove(&i);
            let (a, b) = (i.min(j), i.max(j));
            if let Some(m) = self.upper[a].remove(&b) {
                self.live_bytes -= bytes_of(&m);
            }
        }
        if let Some(m) = self.upper[i].remove(&i) {
            self.live_bytes -= bytes_of(&m);
        }
    }

    /// Removes node `i`'s blocks and sets its size, ready for new blocks.
    pub fn resize_node(&mut self, i: usize, size: usize) {
        self.remove_node(i);
        self.sizes[i] = size;
    }

    /// Stored blocks `(i, j, M)` with `i ≤ j`, in ascending order.
    pub fn iter_stored(&self) -> impl Iterator<Item = (usize, usize, &DenseMatrix)> + '_ {
        self.upper.iter().enumerate().flat_map(|(i, row)| row.iter().map(move |(&j, m)| (i, j, m)))
    }

    /// Consumes the matrix, yielding stored blocks `(i, j, M)` with `i ≤ j`.
    pub fn into_stored(self) -> impl Iterator<Item = (usize, usize, DenseMatrix)> {
        self.upper.into_iter().enumerate().flat_map(|(i, row)| row.into_iter().map(move |(j, m)| (i, j, m)))
    }

    /// Dense `n × n` matrix placing node `i` at global positions `slots[i]`.
    pub fn densify(&self, slots: &[Vec<usize>], n: usize) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(n, n);
        for (i, row) in self.upper.iter().enumerate() {
            for (&j, m) in row {
                for (a, &si) in slots[i].iter().enumerate() {
                    for (b, &sj) in slots[j].iter().enumerate() {
                        d.set(si, sj, m.get(a, b));
                        d.set(sj, si, m.get(a, b));
                    }
                }
            }
        }
        d
    }

    /// `y[slots] += M·x[slots]` over all blocks.
    pub fn apply_acc(&self, slots: &[Vec<usize>], x: &[f64], y: &mut [f64]) {
        for (i, row) in self.upper.iter().enumerate() {
            let xi: Vec<f64> = slots[i].iter().map(|&s| x[s]).collect();
            for (&j, m) in row {
                let xj: Vec<f64> = slots[j].iter().map(|&s| x[s]).collect();
                let yi = m.matvec(&xj);
                for (&s, v) in slots[i].iter().zip(yi) {
                    y[s] += v;
                }
                if i != j {
                    let yj = m.tr_matvec(&xi);
                    for (&s, v) in slots[j].iter().zip(yj) {
                        y[s] += v;
                    }
                }
            }
        }
    }
}

/// Splits `a` into blocks following the node index sets `nodes`, which must partition `0..n`.
pub fn assemble_block_matrix(a: &CsrMatrix, nodes: &[Vec<usize>]) -> Result<BlockMatrix> {
    let n = a.dim();
    if let Some((row, col)) = a.pattern_asymmetry() {
        return Err(SgfError::NonSymmetricPattern { row, col });
    }
    let mut owner = vec![(usize::MAX, 0usize); n];
    for (k, set) in nodes.iter().enumerate() {
        for (l, &u) in set.iter().enumerate() {
            if u >= n || owner[u].0 != usize::MAX {
                return Err(SgfError::DimensionMismatch(format!("node sets do not partition 0..{n} (unknown {u})")));
            }
            owner[u] = (k, l);
        }
    }
    if let Some(u) = owner.iter().position(|o| o.0 == usize::MAX) {
        return Err(SgfError::DimensionMismatch(format!("unknown {u} not covered by any node")));
    }
    let mut m = BlockMatrix::new(nodes.iter().map(Vec::len).collect());
    for (r, c, v) in a.iter() {
        let (ka, la) = owner[r];
        let (kb, lb) = owner[c];
        if ka <= kb {
            m.block_mut(ka, kb).set(la, lb, v);
        }
    }
    Ok(m)
}
