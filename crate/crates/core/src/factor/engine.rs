//! Level-by-level driver: eliminate interiors, compress separators, merge.

use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::dense::{cholesky, flops, range_basis, tri_solve, DenseMatrix, TriMode, DEFAULT_RANK_TOL};
use crate::error::{Result, SgfError};
use crate::grid::{expand_to_unknowns, CellId, CellKind, PartitionHierarchy, PartitionKind, Role};
use crate::sparse::CsrMatrix;

use super::basis::{Degree, PolyBasis};
use super::block::{assemble_block_matrix, BlockMatrix};
use super::precond::{Coupling, ElementaryFactor, FactorStats, LevelStats, Preconditioner};
use super::trace::{RankEntry, RankTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "nest-all-all", alias = "nestallall")]
    NestAllAll,
    #[serde(rename = "nest-2-all", alias = "nest2all")]
    Nest2All,
    #[serde(rename = "nest-2-2", alias = "nest22")]
    Nest22,
    #[serde(rename = "gen-all-all", alias = "genallall")]
    GenAllAll,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::NestAllAll, Scheme::Nest2All, Scheme::Nest22, Scheme::GenAllAll];

    pub fn partition(self) -> PartitionKind {
        match self {
            Scheme::GenAllAll => PartitionKind::General,
            _ => PartitionKind::Nested,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::NestAllAll => "nest-all-all",
            Scheme::Nest2All => "nest-2-all",
            Scheme::Nest22 => "nest-2-2",
            Scheme::GenAllAll => "gen-all-all",
        }
    }

    /// Whether separators of this kind are compressed.
    pub fn compresses(self, kind: CellKind) -> bool {
        match self {
            Scheme::NestAllAll => matches!(kind, CellKind::Cell1 | CellKind::Cell2),
            Scheme::Nest2All | Scheme::Nest22 => kind == CellKind::Cell2,
            Scheme::GenAllAll => true,
        }
    }

    /// Whether couplings to a neighbour of this kind enter the filtered matrix unfiltered.
    pub fn keeps_full_coupling(self, neighbor: CellKind) -> bool {
        self == Scheme::Nest22 && matches!(neighbor, CellKind::Cell0 | CellKind::Cell1)
    }

    pub fn default_b(self, degree: Degree) -> usize {
        match (self, degree) {
            (Scheme::GenAllAll, Degree::Constant) => 3,
            (Scheme::GenAllAll, Degree::Linear) => 4,
            (Scheme::GenAllAll, Degree::Quadratic) => 5,
            _ => 3,
        }
    }

    pub fn default_skip(self) -> usize {
        match self {
            Scheme::GenAllAll => 0,
            _ => 2,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = SgfError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "nestallall" => Ok(Scheme::NestAllAll),
            "nest2all" => Ok(Scheme::Nest2All),
            "nest22" => Ok(Scheme::Nest22),
            "genallall" | "gen" => Ok(Scheme::GenAllAll),
            _ => Err(SgfError::Config(format!("unknown scheme '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CompressionMode {
    Polynomial,
    /// Range of the raw scaled couplings, with ranks replayed from a polynomial run.
    LowRankEquivalent(RankTrace),
    /// No compression; the result is an exact factorization.
    Exact,
}

#[derive(Clone, Debug)]
pub struct FactorOptions {
    pub scheme: Scheme,
    pub degree: Degree,
    pub b: Option<usize>,
    pub skip_first_levels: Option<usize>,
    pub mode: CompressionMode,
    pub rank_tol: f64,
}

impl FactorOptions {
    pub fn new(scheme: Scheme, degree: Degree) -> Self {
        Self {
            scheme,
            degree,
            b: None,
            skip_first_levels: None,
            mode: CompressionMode::Polynomial,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }

    pub fn with_mode(mut self, mode: CompressionMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_b(mut self, b: usize) -> Self {
        self.b = Some(b);
        self
    }

    pub fn with_skip(mut self, skip: usize) -> Self {
        self.skip_first_levels = Some(skip);
        self
    }

    pub fn b(&self) -> usize {
        self.b.unwrap_or_else(|| self.scheme.default_b(self.degree))
    }

    pub fn skip(&self) -> usize {
        self.skip_first_levels.unwrap_or_else(|| self.scheme.default_skip())
    }
}

/// A partition cell together with its not-yet-eliminated unknowns.
#[derive(Clone, Debug)]
pub struct NodeState {
    pub id: CellId,
    /// Every unknown of the cell.
    pub unknowns: Vec<usize>,
    /// Slots of the active variables.
    pub active: Vec<usize>,
    /// `|active| × π` polynomial basis in the current variables.
    pub phi: DenseMatrix,
    pub role: Role,
    pub kind: CellKind,
}

/// Steppable factorization state.
pub struct Factorizer<'h> {
    hierarchy: &'h PartitionHierarchy,
    options: FactorOptions,
    n: usize,
    pi_cols: usize,
    level: usize,
    nodes: Vec<NodeState>,
    matrix: BlockMatrix,
    factors: Vec<ElementaryFactor>,
    stats: FactorStats,
    trace: RankTrace,
    replay_pos: usize,
}

impl<'h> Factorizer<'h> {
    pub fn new(
        a: &CsrMatrix,
        hierarchy: &'h PartitionHierarchy,
        basis: &PolyBasis,
        options: FactorOptions,
    ) -> Result<Self> {
        let n = a.dim();
        if hierarchy.grid.num_unknowns() != n {
            return Err(SgfError::DimensionMismatch(format!(
                "matrix has {n} unknowns, grid has {}",
                hierarchy.grid.num_unknowns()
            )));
        }
        if basis.pi.rows() != n {
            return Err(SgfError::DimensionMismatch(format!("basis has {} rows, matrix {n}", basis.pi.rows())));
        }
        if !(options.rank_tol > 0.0) {
            return Err(SgfError::Config("rank_tol must be positive".into()));
        }
        let nodes: Vec<NodeState> = hierarchy.levels[0]
            .cells
            .iter()
            .map(|cell| {
                let unknowns = expand_to_unknowns(cell, &hierarchy.grid);
                NodeState {
                    id: cell.id,
                    phi: basis.rows(&unknowns),
                    active: unknowns.clone(),
                    unknowns,
                    role: cell.role,
                    kind: cell.kind,
                }
            })
            .collect();
        let sets: Vec<Vec<usize>> = nodes.iter().map(|s| s.unknowns.clone()).collect();
        let matrix = assemble_block_matrix(a, &sets)?;
        let stats = FactorStats { peak_blocks_bytes: matrix.peak_bytes(), ..Default::default() };
        Ok(Self {
            hierarchy,
            options,
            n,
            pi_cols: basis.pi_cols(),
            level: 0,
            nodes,
            matrix,
            factors: Vec::new(),
            stats,
            trace: RankTrace::default(),
            replay_pos: 0,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn matrix(&self) -> &BlockMatrix {
        &self.matrix
    }

    pub fn factors(&self) -> &[ElementaryFactor] {
        &self.factors
    }

    pub fn stats(&self) -> &FactorStats {
        &self.stats
    }

    pub fn options(&self) -> &FactorOptions {
        &self.options
    }

    pub fn active_slots(&self) -> Vec<Vec<usize>> {
        self.nodes.iter().map(|s| s.active.clone()).collect()
    }

    pub fn remaining_active(&self) -> usize {
        self.nodes.iter().map(|s| s.active.len()).sum()
    }

    pub fn is_last_level(&self) -> bool {
        self.level + 1 >= self.hierarchy.num_levels()
    }

    fn note_peak(&mut self) {
        self.stats.peak_blocks_bytes = self.stats.peak_blocks_bytes.max(self.matrix.peak_bytes());
    }

    /// Schur-complement the node's active variables into its neighbours.
    pub fn eliminate_node(&mut self, p: usize) -> Result<()> {
        let slots = self.nodes[p].active.clone();
        let m = slots.len();
        if m == 0 {
            return Ok(());
        }
        let l = cholesky(&self.matrix.block(p, p))?;
        self.stats.flops_factorize += flops::cholesky(m);
        let nbrs: Vec<usize> = self.matrix.neighbors(p).iter().copied().collect();
        let mut ws = Vec::with_capacity(nbrs.len());
        for &q in &nbrs {
            let w = tri_solve(&l, &self.matrix.block(p, q), TriMode::LeftL)?;
            self.stats.flops_factorize += flops::tri_solve(m, w.cols());
            ws.push(w);
        }
        for i in 0..nbrs.len() {
            for j in i..nbrs.len() {
                let (wi, wj) = (&ws[i], &ws[j]);
                self.stats.flops_factorize += flops::gemm(wi.cols(), wj.cols(), m);
                self.matrix.block_mut(nbrs[i], nbrs[j]).tr_matmul_acc(-1.0, wi, wj);
            }
        }
        self.note_peak();
        self.matrix.resize_node(p, 0);
        let couplings = nbrs
            .iter()
            .zip(ws)
            .map(|(&q, e_t)| Coupling { neighbor: self.nodes[q].id, slots: self.nodes[q].active.clone(), e_t })
            .collect();
        let node = &mut self.nodes[p];
        self.factors.push(ElementaryFactor::Elimination { level: self.level, node: node.id, slots, l, couplings });
        node.active.clear();
        node.phi = DenseMatrix::zeros(0, self.pi_cols);
        Ok(())
    }

    fn replay_rank(&mut self, node: CellId, size: usize) -> Result<usize> {
        let CompressionMode::LowRankEquivalent(trace) = &self.options.mode else {
            unreachable!("replay only in low-rank mode")
        };
        let Some(&e) = trace.entries.get(self.replay_pos) else {
            return Err(SgfError::TraceMismatch(format!(
                "trace exhausted after {} entries at level {} node {node}",
                self.replay_pos, self.level
            )));
        };
        if (e.level, e.node, e.size) != (self.level, node, size) {
            return Err(SgfError::TraceMismatch(format!(
                "entry {}: expected level {} node {} size {}, run has level {} node {node} size {size}",
                self.replay_pos, e.level, e.node, e.size, self.level
            )));
        }
        self.replay_pos += 1;
        if e.rank > size {
            warn!("trace rank {} exceeds node size {size}; clipped", e.rank);
        }
        Ok(e.rank.min(size))
    }

    /// Compresses node `p` with the configured mode.
    pub fn compress_node(&mut self, p: usize) -> Result<()> {
        let m = self.nodes[p].active.len();
        if m == 0 || self.options.mode == CompressionMode::Exact {
            return Ok(());
        }
        let l = cholesky(&self.matrix.block(p, p))?;
        self.stats.flops_factorize += flops::cholesky(m);
        let nbrs: Vec<usize> = self.matrix.neighbors(p).iter().copied().collect();
        let mut ws = Vec::with_capacity(nbrs.len());
        for &q in &nbrs {
            let w = tri_solve(&l, &self.matrix.block(p, q), TriMode::LeftL)?;
            self.stats.flops_factorize += flops::tri_solve(m, w.cols());
            ws.push(w);
        }
        let lt_phi = l.mul_lt(&self.nodes[p].phi);
        self.stats.flops_factorize += flops::gemm(m, self.pi_cols, m) / 2;

        let low_rank = matches!(self.options.mode, CompressionMode::LowRankEquivalent(_));
        let (forced, filtered) = if low_rank {
            let r = self.replay_rank(self.nodes[p].id, m)?;
            let refs: Vec<&DenseMatrix> = ws.iter().collect();
            (Some(r), DenseMatrix::hstack(&refs)?)
        } else {
            let mut cols = vec![lt_phi.clone()];
            for (&q, w) in nbrs.iter().zip(&ws) {
                if self.options.scheme.keeps_full_coupling(self.nodes[q].kind) {
                    cols.push(w.clone());
                } else {
                    self.stats.flops_factorize += flops::gemm(m, self.pi_cols, w.cols());
                    cols.push(w.matmul(&self.nodes[q].phi));
                }
            }
            let refs: Vec<&DenseMatrix> = cols.iter().collect();
            (None, DenseMatrix::hstack(&refs)?)
        };
        self.stats.flops_factorize += flops::qr(m, filtered.cols());
        let (q, r) = range_basis(&filtered, self.options.rank_tol, forced);

        let id = self.nodes[p].id;
        self.trace.entries.push(RankEntry { level: self.level, node: id, size: m, rank: r });
        self.stats.max_node_size = self.stats.max_node_size.max(r);
        if let Some(ls) = self.stats.per_level.last_mut() {
            ls.retained_ranks.push(r);
        }
        if r == m {
            return Ok(());
        }
        if let Some(ls) = self.stats.per_level.last_mut() {
            ls.compressed_nodes += 1;
        }

        let q1 = q.leading_columns(r);
        let new_phi = q1.tr_matmul(&lt_phi);
        let couplings: Vec<DenseMatrix> = ws
            .iter()
            .map(|w| {
                self.stats.flops_factorize += flops::gemm(r, w.cols(), m);
                q1.tr_matmul(w)
            })
            .collect();
        self.matrix.resize_node(p, r);
        if r > 0 {
            self.matrix.set_block(p, p, DenseMatrix::identity(r));
            for (&nq, c) in nbrs.iter().zip(couplings) {
                if self.matrix.size(nq) > 0 {
                    self.matrix.set_block(p, nq, c);
                }
            }
        }
        self.note_peak();
        let node = &mut self.nodes[p];
        self.factors.push(ElementaryFactor::Compression {
            level: self.level,
            node: id,
            slots: node.active.clone(),
            l,
            q,
            retained: r,
        });
        node.active.truncate(r);
        node.phi = new_phi;
        debug!("level {} node {id}: compressed {m} -> {r}", self.level);
        Ok(())
    }

    fn begin_level(&mut self) {
        let max_active = self.nodes.iter().map(|s| s.active.len()).max().unwrap_or(0);
        self.stats.max_active_size = self.stats.max_active_size.max(max_active);
        self.stats.per_level.push(LevelStats {
            level: self.level,
            nodes: self.nodes.len(),
            active_unknowns: self.remaining_active(),
            max_active,
            ..Default::default()
        });
    }

    /// Eliminates interiors of the current level in cell order.
    pub fn eliminate_interiors(&mut self) -> Result<()> {
        for p in 0..self.nodes.len() {
            if self.nodes[p].role == Role::Interior && !self.nodes[p].active.is_empty() {
                self.eliminate_node(p)?;
                if let Some(ls) = self.stats.per_level.last_mut() {
                    ls.eliminated_nodes += 1;
                }
            }
        }
        Ok(())
    }

    /// Compresses the scheme's selected separators of the current level in cell order.
    pub fn compress_separators(&mut self) -> Result<()> {
        if self.options.mode == CompressionMode::Exact || self.level < self.options.skip() {
            return Ok(());
        }
        for p in 0..self.nodes.len() {
            let s = &self.nodes[p];
            if s.role == Role::Separator && self.options.scheme.compresses(s.kind) {
                self.compress_node(p)?;
            }
        }
        Ok(())
    }

    /// Re-keys nodes and blocks onto the cells of the next level.
    pub fn merge_level(&mut self) -> Result<()> {
        if self.is_last_level() {
            return Err(SgfError::Config("no level above the last one".into()));
        }
        let t = self.level;
        let father = &self.hierarchy.levels[t].father;
        let next = &self.hierarchy.levels[t + 1];
        let children = self.hierarchy.children(t);
        let mut offset = vec![0usize; self.nodes.len()];
        let mut new_nodes = Vec::with_capacity(next.cells.len());
        for (cell, kids) in next.cells.iter().zip(&children) {
            let mut active = Vec::new();
            let mut phis = Vec::new();
            for &k in kids {
                offset[k] = active.len();
                active.extend_from_slice(&self.nodes[k].active);
                phis.push(&self.nodes[k].phi);
            }
            let phi = if active.is_empty() { DenseMatrix::zeros(0, self.pi_cols) } else { DenseMatrix::vstack(&phis)? };
            new_nodes.push(NodeState {
                id: cell.id,
                unknowns: expand_to_unknowns(cell, &self.hierarchy.grid),
                active,
                phi,
                role: cell.role,
                kind: cell.kind,
            });
        }
        let old =
            std::mem::replace(&mut self.matrix, BlockMatrix::new(new_nodes.iter().map(|s| s.active.len()).collect()));
        let old_live = old.live_bytes();
        for (a, b, blk) in old.into_stored() {
            let (fa, fb) = (father[a], father[b]);
            if fa < fb {
                self.matrix.block_mut(fa, fb).set_block(offset[a], offset[b], &blk);
            } else if fa > fb {
                self.matrix.block_mut(fb, fa).set_block(offset[b], offset[a], &blk.transpose());
            } else {
                let d = self.matrix.block_mut(fa, fa);
                d.set_block(offset[a], offset[b], &blk);
                if a != b {
                    d.set_block(offset[b], offset[a], &blk.transpose());
                }
            }
        }
        self.stats.peak_blocks_bytes = self.stats.peak_blocks_bytes.max(old_live + self.matrix.live_bytes());
        self.nodes = new_nodes;
        self.level = t + 1;
        Ok(())
    }

    /// Whether the driver should stop and factor the remainder densely.
    pub fn should_finish(&self) -> bool {
        self.is_last_level() || (self.level > 0 && self.remaining_active() < self.stats.max_active_size)
    }

    /// Runs every level and returns the preconditioner.
    pub fn run(mut self) -> Result<Preconditioner> {
        loop {
            self.begin_level();
            if self.should_finish() {
                break;
            }
            self.eliminate_interiors()?;
            self.compress_separators()?;
            self.merge_level()?;
        }
        self.finish()
    }

    /// Dense Cholesky of everything still active.
    pub fn finish(mut self) -> Result<Preconditioner> {
        if let CompressionMode::LowRankEquivalent(t) = &self.options.mode {
            if self.replay_pos != t.entries.len() {
                return Err(SgfError::TraceMismatch(format!(
                    "run used {} of {} trace entries",
                    self.replay_pos,
                    t.entries.len()
                )));
            }
        }
        let mut offset = vec![0usize; self.nodes.len()];
        let mut perm = Vec::new();
        for (k, s) in self.nodes.iter().enumerate() {
            offset[k] = perm.len();
            perm.extend_from_slice(&s.active);
        }
        let m = perm.len();
        if m > 0 {
            let mut d = DenseMatrix::zeros(m, m);
            for (a, b, blk) in self.matrix.iter_stored() {
                d.set_block(offset[a], offset[b], blk);
                if a != b {
                    d.set_block(offset[b], offset[a], &blk.transpose());
                }
            }
            let l = cholesky(&d)?;
            self.stats.flops_factorize += flops::cholesky(m);
            self.factors.push(ElementaryFactor::FinalDense { perm, l });
        }
        self.stats.final_dense_size = m;
        self.stats.levels = self.level + 1;
        self.note_peak();
        Ok(Preconditioner::new(self.n, self.factors, self.stats, self.trace))
    }

    /// `F·T·Fᵀ·x` for the factors so far and the current trailing matrix `T`
    /// (identity on inactive slots). Equals `A·x` in exact mode at every stage.
    pub fn apply_current(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut w = x.to_vec();
        for f in &self.factors {
            f.mul_transpose(&mut w);
        }
        let slots = self.active_slots();
        let mut y = w.clone();
        for s in slots.iter().flatten() {
            y[*s] = 0.0;
        }
        self.matrix.apply_acc(&slots, &w, &mut y);
        for f in self.factors.iter().rev() {
            f.mul(&mut y);
        }
        y
    }
}

/// Factorizes `a` on the given hierarchy and basis.
pub fn factorize_matrix(
    a: &CsrMatrix,
    hierarchy: &PartitionHierarchy,
    basis: &PolyBasis,
    options: FactorOptions,
) -> Result<Preconditioner> {
    if hierarchy.kind != options.scheme.partition() {
        return Err(SgfError::Config(format!("scheme {} does not match the partition kind", options.scheme)));
    }
    Factorizer::new(a, hierarchy, basis, options)?.run()
}
