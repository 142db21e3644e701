use crate::error::{Result, SgfError};
use crate::grid::CartesianGrid;
use crate::sparse::CsrMatrix;

use super::{grid_coords, ProblemInstance};

/// 7-point Laplacian on the `nx × ny × nz` interior vertices of a box with zero Dirichlet data.
///
/// Vertex `(i, j, k)` sits at `((i+1)·hx, (j+1)·hy, (k+1)·hz)`.
pub fn poisson7(nx: usize, ny: usize, nz: usize, spacing: [f64; 3]) -> Result<ProblemInstance> {
    let dims = [nx, ny, nz];
    if dims.iter().any(|&d| d < 2) {
        return Err(SgfError::GridTooSmall(format!("poisson grid {dims:?} needs at least 2 vertices per axis")));
    }
    let grid = CartesianGrid::new(dims, spacing, 1)?;
    let n = grid.num_vertices();
    let w = spacing.map(|h| 1.0 / (h * h));
    let diag: f64 = 2.0 * w.iter().sum::<f64>();
    let mut t = Vec::with_capacity(7 * n);
    for v in 0..n {
        let idx = grid.vertex_index(v);
        t.push((v, v, diag));
        for a in 0..3 {
            let stride = [1, nx, nx * ny][a];
            if idx[a] > 0 {
                t.push((v, v - stride, -w[a]));
            }
            if idx[a] + 1 < dims[a] {
                t.push((v, v + stride, -w[a]));
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(n, t)?;
    Ok(ProblemInstance {
        matrix,
        coords: grid_coords(&grid, spacing),
        rhs: vec![1.0; n],
        components: 1,
        label: format!("poisson-{nx}x{ny}x{nz}"),
        grid,
    })
}

/// Cube of `n³` interior vertices in the unit box, `h = 1/(n+1)`.
pub fn poisson7_unit(n: usize) -> Result<ProblemInstance> {
    let h = 1.0 / (n as f64 + 1.0);
    poisson7(n, n, n, [h; 3])
}
