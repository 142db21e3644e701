//! Partition hierarchies on cartesian vertex grids.
//!
//! Two families are built here. Nested-dissection hierarchies cut the grid by
//! one-vertex-thick separator slabs every `d = 2^(t-1)·b` vertices; the boxes
//! between slabs are the interiors (3-cells), and the slab pieces are 2-, 1-
//! and 0-cells depending on how many axes they are thin along. General
//! hierarchies tile the grid with boxes of side `d` and treat every box as a
//! separator.
//!
//! Vertices are numbered x-fastest: `v = ix + nx·(iy + ny·iz)`. Unknowns of a
//! vector PDE are numbered component-major: `u = c·V + v`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SgfError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartesianGrid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub components: usize,
}

impl CartesianGrid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], components: usize) -> Result<Self> {
        if dims.contains(&0) {
            return Err(SgfError::GridTooSmall(format!("grid dims must be positive, got {dims:?}")));
        }
        if spacing.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(SgfError::Config(format!("grid spacing must be positive, got {spacing:?}")));
        }
        if components == 0 {
            return Err(SgfError::Config("components per vertex must be at least 1".into()));
        }
        Ok(Self { dims, spacing, components })
    }

    pub fn scalar(dims: [usize; 3]) -> Self {
        Self::new(dims, [1.0; 3], 1).expect("valid scalar grid")
    }

    pub fn num_vertices(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn num_unknowns(&self) -> usize {
        self.num_vertices() * self.components
    }

    #[inline]
    pub fn vertex_id(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.dims[0] * (iy + self.dims[1] * iz)
    }

    #[inline]
    pub fn vertex_index(&self, v: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [v % nx, (v / nx) % ny, v / (nx * ny)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Cell0,
    Cell1,
    Cell2,
    Cell3,
    General,
}

impl CellKind {
    fn from_thick_axes(thick: usize) -> Self {
        match thick {
            0 => CellKind::Cell0,
            1 => CellKind::Cell1,
            2 => CellKind::Cell2,
            _ => CellKind::Cell3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Interior,
    Separator,
}

/// Index of a cell within its level.
pub type CellId = usize;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cell {
    pub id: CellId,
    #[serde(skip)]
    pub vertex_ids: Vec<usize>,
    /// Inclusive box extents in vertex indices.
    pub lo: [usize; 3],
    pub hi: [usize; 3],
    pub kind: CellKind,
    pub role: Role,
}

impl Cell {
    pub fn num_vertices(&self) -> usize {
        self.vertex_ids.len()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Level {
    pub cells: Vec<Cell>,
    /// `father[c]` is the cell of the next level containing cell `c`; empty on the last level.
    pub father: Vec<CellId>,
    /// Geometric neighbours (boxes within one vertex of each other), as `(i, j)` with `i < j`.
    pub adjacency: BTreeSet<(CellId, CellId)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartitionKind {
    Nested,
    General,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartitionHierarchy {
    pub kind: PartitionKind,
    pub b: usize,
    pub grid: CartesianGrid,
    pub levels: Vec<Level>,
}

#[derive(Clone, Copy, Debug)]
struct Segment {
    start: usize,
    end: usize,
    thin: bool,
}

fn nested_segments(n: usize, d: usize) -> Vec<Segment> {
    let mut segs = Vec::new();
    let mut run_start = None;
    for i in 0..n {
        if (i + 1) % d == 0 {
            if let Some(s) = run_start.take() {
                segs.push(Segment { start: s, end: i, thin: false });
            }
            segs.push(Segment { start: i, end: i + 1, thin: true });
        } else if run_start.is_none() {
            run_start = Some(i);
        }
    }
    if let Some(s) = run_start {
        segs.push(Segment { start: s, end: n, thin: false });
    }
    segs
}

fn general_segments(n: usize, d: usize) -> Vec<Segment> {
    (0..n.div_ceil(d)).map(|k| Segment { start: k * d, end: ((k + 1) * d).min(n), thin: false }).collect()
}

struct LevelLayout {
    segs: [Vec<Segment>; 3],
}

impl LevelLayout {
    fn num_cells(&self) -> usize {
        self.segs.iter().map(Vec::len).product()
    }

    fn cell_index(&self, s: [usize; 3]) -> usize {
        s[0] + self.segs[0].len() * (s[1] + self.segs[1].len() * s[2])
    }

    /// Segment index containing vertex coordinate `i` along `axis`.
    fn segment_of(&self, axis: usize, i: usize) -> usize {
        self.segs[axis].partition_point(|s| s.end <= i)
    }

    fn build_level(&self, grid: &CartesianGrid, nested: bool) -> Level {
        let mut cells = Vec::with_capacity(self.num_cells());
        for (sz, zs) in self.segs[2].iter().enumerate() {
            for (sy, ys) in self.segs[1].iter().enumerate() {
                for (sx, xs) in self.segs[0].iter().enumerate() {
                    let mut vertex_ids =
                        Vec::with_capacity((xs.end - xs.start) * (ys.end - ys.start) * (zs.end - zs.start));
                    for iz in zs.start..zs.end {
                        for iy in ys.start..ys.end {
                            for ix in xs.start..xs.end {
                                vertex_ids.push(grid.vertex_id(ix, iy, iz));
                            }
                        }
                    }
                    let (kind, role) = if nested {
                        let thick = [xs, ys, zs].iter().filter(|s| !s.thin).count();
                        let kind = CellKind::from_thick_axes(thick);
                        let role = if kind == CellKind::Cell3 { Role::Interior } else { Role::Separator };
                        (kind, role)
                    } else {
                        (CellKind::General, Role::Separator)
                    };
                    let id = self.cell_index([sx, sy, sz]);
                    cells.push(Cell {
                        id,
                        vertex_ids,
                        lo: [xs.start, ys.start, zs.start],
                        hi: [xs.end - 1, ys.end - 1, zs.end - 1],
                        kind,
                        role,
                    });
                }
            }
        }
        let adjacency = self.geometric_adjacency();
        Level { cells, father: Vec::new(), adjacency }
    }

    fn geometric_adjacency(&self) -> BTreeSet<(CellId, CellId)> {
        let n = [self.segs[0].len(), self.segs[1].len(), self.segs[2].len()];
        let mut adj = BTreeSet::new();
        for sz in 0..n[2] {
            for sy in 0..n[1] {
                for sx in 0..n[0] {
                    let a = self.cell_index([sx, sy, sz]);
                    for dz in 0..=1usize {
                        for dy in -1i64..=1 {
                            for dx in -1i64..=1 {
                                if dz == 0 && (dy < 0 || (dy == 0 && dx <= 0)) {
                                    continue;
                                }
                                let (tx, ty, tz) = (sx as i64 + dx, sy as i64 + dy, (sz + dz) as i64);
                                if tx < 0 || ty < 0 || tx >= n[0] as i64 || ty >= n[1] as i64 || tz >= n[2] as i64 {
                                    continue;
                                }
                                let b = self.cell_index([tx as usize, ty as usize, tz as usize]);
                                adj.insert((a.min(b), a.max(b)));
                            }
                        }
                    }
                }
            }
        }
        adj
    }

    fn father_map(&self, next: &LevelLayout) -> Vec<CellId> {
        let mut father = Vec::with_capacity(self.num_cells());
        for zs in &self.segs[2] {
            for ys in &self.segs[1] {
                for xs in &self.segs[0] {
                    let s = [next.segment_of(0, xs.start), next.segment_of(1, ys.start), next.segment_of(2, zs.start)];
                    father.push(next.cell_index(s));
                }
            }
        }
        father
    }
}

fn build_hierarchy(grid: &CartesianGrid, b: usize, kind: PartitionKind) -> Result<PartitionHierarchy> {
    if b < 2 {
        return Err(SgfError::Config(format!("block parameter b must be at least 2, got {b}")));
    }
    let nested = kind == PartitionKind::Nested;
    let layout_at = |d: usize| LevelLayout {
        segs: std::array::from_fn(|a| {
            if nested {
                nested_segments(grid.dims[a], d)
            } else {
                general_segments(grid.dims[a], d)
            }
        }),
    };
    let mut layouts = vec![layout_at(b)];
    if layouts[0].num_cells() <= 1 {
        return Err(SgfError::GridTooSmall(format!(
            "no cutting plane fits a {:?} grid at level 1 with b = {b}",
            grid.dims
        )));
    }
    let mut d = b;
    while layouts.last().unwrap().num_cells() > 1 {
        d *= 2;
        layouts.push(layout_at(d));
    }
    let mut levels: Vec<Level> = layouts.iter().map(|l| l.build_level(grid, nested)).collect();
    for t in 0..layouts.len() - 1 {
        levels[t].father = layouts[t].father_map(&layouts[t + 1]);
    }
    Ok(PartitionHierarchy { kind, b, grid: grid.clone(), levels })
}

/// Nested-dissection hierarchy with separator slabs every `2^(t-1)·b` vertices.
pub fn build_nested_hierarchy(grid: &CartesianGrid, b: usize) -> Result<PartitionHierarchy> {
    build_hierarchy(grid, b, PartitionKind::Nested)
}

/// Buffer-free hierarchy of boxes with side `2^(t-1)·b` vertices.
pub fn build_general_hierarchy(grid: &CartesianGrid, b: usize) -> Result<PartitionHierarchy> {
    build_hierarchy(grid, b, PartitionKind::General)
}

impl PartitionHierarchy {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Children of each cell of level `t + 1`, in ascending cell id order.
    pub fn children(&self, t: usize) -> Vec<Vec<CellId>> {
        let mut out = vec![Vec::new(); self.levels[t + 1].cells.len()];
        for (c, &f) in self.levels[t].father.iter().enumerate() {
            out[f].push(c);
        }
        out
    }

    /// Diagnostic JSON dump (cell id, box extents, kind, role per level).
    pub fn to_debug_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks the partition and coarsening properties, returning a description of the first violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let nv = self.grid.num_vertices();
        for (t, level) in self.levels.iter().enumerate() {
            let mut seen = vec![false; nv];
            let mut total = 0;
            for cell in &level.cells {
                if cell.vertex_ids.is_empty() {
                    return Err(format!("level {t}: cell {} is empty", cell.id));
                }
                for &v in &cell.vertex_ids {
                    if std::mem::replace(&mut seen[v], true) {
                        return Err(format!("level {t}: vertex {v} in two cells"));
                    }
                }
                total += cell.vertex_ids.len();
            }
            if total != nv {
                return Err(format!("level {t}: cells cover {total} of {nv} vertices"));
            }
            for &(i, j) in &level.adjacency {
                if i >= j {
                    return Err(format!("level {t}: adjacency pair ({i}, {j}) not ordered"));
                }
            }
            if t + 1 < self.levels.len() {
                let children = self.children(t);
                for (f, kids) in children.iter().enumerate() {
                    let mut union: Vec<usize> =
                        kids.iter().flat_map(|&c| level.cells[c].vertex_ids.iter().copied()).collect();
                    union.sort_unstable();
                    let mut own = self.levels[t + 1].cells[f].vertex_ids.clone();
                    own.sort_unstable();
                    if union != own {
                        return Err(format!("level {}: cell {f} is not the union of its children", t + 1));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Pairs of cells coupled by at least one nonzero `(row, col)` of a matrix.
///
/// `cell_of[u]` is the cell holding unknown `u`, or `None` if `u` is no longer active.
pub fn compute_adjacency(
    cell_of: &[Option<CellId>],
    pattern: impl IntoIterator<Item = (usize, usize)>,
) -> BTreeSet<(CellId, CellId)> {
    let mut adj = BTreeSet::new();
    for (r, c) in pattern {
        if let (Some(Some(a)), Some(Some(b))) = (cell_of.get(r), cell_of.get(c)) {
            if a != b {
                adj.insert((*a.min(b), *a.max(b)));
            }
        }
    }
    adj
}

/// Unknown indices of all components of the cell's vertices, component-major.
pub fn expand_to_unknowns(cell: &Cell, grid: &CartesianGrid) -> Vec<usize> {
    let nv = grid.num_vertices();
    (0..grid.components).flat_map(|c| cell.vertex_ids.iter().map(move |&v| c * nv + v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn far_from_boundary(cell: &Cell, grid: &CartesianGrid, margin: usize) -> bool {
        (0..3).all(|a| cell.lo[a] >= margin && cell.hi[a] + margin < grid.dims[a])
    }

    #[test]
    fn nested_cell_sizes_away_from_boundary() {
        let grid = CartesianGrid::scalar([17, 17, 17]);
        let h = build_nested_hierarchy(&grid, 3).unwrap();
        let level = &h.levels[0];
        let d = 3;
        for cell in level.cells.iter().filter(|c| far_from_boundary(c, &grid, 1)) {
            let expect = match cell.kind {
                CellKind::Cell3 => (d - 1) * (d - 1) * (d - 1),
                CellKind::Cell2 => (d - 1) * (d - 1),
                CellKind::Cell1 => d - 1,
                CellKind::Cell0 => 1,
                CellKind::General => unreachable!(),
            };
            assert_eq!(cell.num_vertices(), expect, "{cell:?}");
        }
        assert!(level.cells.iter().any(|c| c.kind == CellKind::Cell3 && c.num_vertices() == 8));
        assert!(level.cells.iter().any(|c| c.kind == CellKind::Cell2 && c.num_vertices() == 4));
    }

    #[test]
    fn nested_roles_follow_kinds() {
        let grid = CartesianGrid::scalar([17, 17, 17]);
        let h = build_nested_hierarchy(&grid, 3).unwrap();
        for level in &h.levels {
            for cell in &level.cells {
                assert_eq!(cell.kind == CellKind::Cell3, cell.role == Role::Interior);
            }
        }
        assert_eq!(h.levels.last().unwrap().cells.len(), 1);
    }

    #[test]
    fn nested_17_cubed_partition_exhaustive() {
        let grid = CartesianGrid::scalar([17, 17, 17]);
        let h = build_nested_hierarchy(&grid, 3).unwrap();
        h.validate().unwrap();
    }

    #[test]
    fn general_exact_division() {
        let grid = CartesianGrid::scalar([8, 8, 8]);
        let h = build_general_hierarchy(&grid, 4).unwrap();
        assert_eq!(h.levels[0].cells.len(), 8);
        assert!(h.levels[0].cells.iter().all(|c| c.num_vertices() == 64));
        assert!(h.levels[0].cells.iter().all(|c| c.role == Role::Separator && c.kind == CellKind::General));
        assert_eq!(h.num_levels(), 2);
        h.validate().unwrap();
    }

    #[test]
    fn general_truncated_boxes() {
        let grid = CartesianGrid::scalar([9, 9, 9]);
        let h = build_general_hierarchy(&grid, 4).unwrap();
        h.validate().unwrap();
        let mut sizes: Vec<usize> = h.levels[0].cells.iter().map(Cell::num_vertices).collect();
        sizes.sort_unstable();
        sizes.dedup();
        // products of side lengths drawn from {4, 4, 1}
        assert_eq!(sizes, vec![1, 4, 16, 64]);
    }

    #[test]
    fn general_level_two_box_size() {
        let grid = CartesianGrid::scalar([20, 20, 20]);
        let h = build_general_hierarchy(&grid, 3).unwrap();
        assert!(h.levels[1].cells.iter().any(|c| c.num_vertices() == 216));
    }

    #[test]
    fn too_small_grid() {
        let grid = CartesianGrid::scalar([2, 2, 2]);
        assert!(matches!(build_nested_hierarchy(&grid, 3), Err(SgfError::GridTooSmall(_))));
        assert!(matches!(build_general_hierarchy(&grid, 3), Err(SgfError::GridTooSmall(_))));
        assert!(build_general_hierarchy(&CartesianGrid::scalar([9, 9, 9]), 1).is_err());
    }

    #[test]
    fn level_count_grows_with_doublings() {
        let count = |n: usize| build_nested_hierarchy(&CartesianGrid::scalar([n, n, n]), 4).unwrap().num_levels();
        assert_eq!(count(32), count(16) + 1);
        assert_eq!(count(64), count(16) + 2);
        let count = |n: usize| build_general_hierarchy(&CartesianGrid::scalar([n, n, n]), 4).unwrap().num_levels();
        assert_eq!(count(32), count(16) + 1);
        assert_eq!(count(64), count(16) + 2);
    }

    #[test]
    fn adjacency_from_pattern() {
        let cell_of = vec![Some(0), Some(0), Some(1), None];
        assert!(compute_adjacency(&cell_of, [(0, 0), (1, 1), (2, 2)]).is_empty());
        let adj = compute_adjacency(&cell_of, [(1, 2), (2, 1), (0, 3)]);
        assert_eq!(adj.into_iter().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn expand_unknowns_component_major() {
        let grid = CartesianGrid::new([4, 1, 1], [1.0; 3], 3).unwrap();
        let cell = Cell {
            id: 0,
            vertex_ids: vec![1, 2],
            lo: [1, 0, 0],
            hi: [2, 0, 0],
            kind: CellKind::General,
            role: Role::Separator,
        };
        assert_eq!(expand_to_unknowns(&cell, &grid), vec![1, 2, 5, 6, 9, 10]);
        let scalar = CartesianGrid::scalar([4, 1, 1]);
        assert_eq!(expand_to_unknowns(&cell, &scalar), vec![1, 2]);
    }

    #[test]
    fn debug_dump_is_json() {
        let h = build_general_hierarchy(&CartesianGrid::scalar([6, 6, 6]), 3).unwrap();
        let v: serde_json::Value = serde_json::from_str(&h.to_debug_json().unwrap()).unwrap();
        assert!(v["levels"][0]["cells"][0]["kind"].is_string());
    }
}
