use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Result, SgfError};
use crate::grid::CartesianGrid;
use crate::sparse::CsrMatrix;

use super::ProblemInstance;

/// Lamé parameters `(λ, μ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lame {
    pub lambda: f64,
    pub mu: f64,
}

impl Lame {
    pub const fn new(lambda: f64, mu: f64) -> Self {
        Self { lambda, mu }
    }
}

pub const BEAM_LENGTH: f64 = 8.0;

fn voigt(l: Lame) -> [[f64; 6]; 6] {
    let mut d = [[0.0; 6]; 6];
    for i in 0..3 {
        for j in 0..3 {
            d[i][j] = l.lambda;
        }
        d[i][i] = l.lambda + 2.0 * l.mu;
        d[i + 3][i + 3] = l.mu;
    }
    d
}

/// Stiffness of one trilinear cube element of side `h`, 24×24.
///
/// Local node `a = i + 2j + 4k` sits at corner `(i, j, k)·h`; dof `3a + c` is component `c`.
pub fn hex_element_stiffness(h: f64, lame: Lame) -> DenseMatrix {
    let d = voigt(lame);
    let g = 1.0 / 3f64.sqrt();
    let mut k = DenseMatrix::zeros(24, 24);
    let corners: Vec<[f64; 3]> = (0..8)
        .map(|a| [(2 * (a & 1)) as f64 - 1.0, (2 * ((a >> 1) & 1)) as f64 - 1.0, (2 * (a >> 2)) as f64 - 1.0])
        .collect();
    let jac = h / 2.0;
    let det = jac * jac * jac;
    for q in 0..8 {
        let xi = [corners[q][0] * g, corners[q][1] * g, corners[q][2] * g];
        // physical gradients of the shape functions
        let grads: Vec<[f64; 3]> = corners
            .iter()
            .map(|c| {
                let f = |a: usize| 0.5 * (1.0 + c[a] * xi[a]);
                [0.5 * c[0] * f(1) * f(2) / jac, 0.5 * c[1] * f(0) * f(2) / jac, 0.5 * c[2] * f(0) * f(1) / jac]
            })
            .collect();
        let mut b = [[0.0; 24]; 6];
        for (a, gr) in grads.iter().enumerate() {
            b[0][3 * a] = gr[0];
            b[1][3 * a + 1] = gr[1];
            b[2][3 * a + 2] = gr[2];
            b[3][3 * a] = gr[1];
            b[3][3 * a + 1] = gr[0];
            b[4][3 * a + 1] = gr[2];
            b[4][3 * a + 2] = gr[1];
            b[5][3 * a] = gr[2];
            b[5][3 * a + 2] = gr[0];
        }
        let mut db = [[0.0; 24]; 6];
        for i in 0..6 {
            for j in 0..24 {
                db[i][j] = (0..6).map(|m| d[i][m] * b[m][j]).sum();
            }
        }
        for i in 0..24 {
            for j in 0..24 {
                let v: f64 = (0..6).map(|m| b[m][i] * db[m][j]).sum();
                k.add_to(i, j, v * det);
            }
        }
    }
    k.symmetrize();
    k
}

/// The six rigid body modes at `coords`, component-major, rotations about the centroid.
pub fn rigid_body_modes(coords: &[[f64; 3]]) -> Vec<Vec<f64>> {
    let nv = coords.len();
    let mut c = [0.0; 3];
    for p in coords {
        for a in 0..3 {
            c[a] += p[a] / nv as f64;
        }
    }
    let mut modes = Vec::with_capacity(6);
    for t in 0..3 {
        let mut m = vec![0.0; 3 * nv];
        m[t * nv..(t + 1) * nv].iter_mut().for_each(|v| *v = 1.0);
        modes.push(m);
    }
    for axis in 0..3 {
        let mut m = vec![0.0; 3 * nv];
        for (v, p) in coords.iter().enumerate() {
            let r = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
            let mut w = [0.0; 3];
            w[axis] = 1.0;
            let u = [w[1] * r[2] - w[2] * r[1], w[2] * r[0] - w[0] * r[2], w[0] * r[1] - w[1] * r[0]];
            for comp in 0..3 {
                m[comp * nv + v] = u[comp];
            }
        }
        modes.push(m);
    }
    modes
}

fn assemble_beam(refinement: usize, left: Lame, right: Lame, clamp: bool) -> Result<ProblemInstance> {
    if refinement == 0 {
        return Err(SgfError::GridTooSmall("beam refinement must be at least 1".into()));
    }
    let r = refinement;
    let h = 1.0 / r as f64;
    let ne = [8 * r, r, r];
    let first = usize::from(clamp);
    let dims = [ne[0] + 1 - first, r + 1, r + 1];
    let grid = CartesianGrid::new(dims, [h; 3], 3)?;
    let nv = grid.num_vertices();
    let k_left = hex_element_stiffness(h, left);
    let k_right = hex_element_stiffness(h, right);
    let free_id = |ix: usize, iy: usize, iz: usize| -> Option<usize> {
        (ix >= first).then(|| grid.vertex_id(ix - first, iy, iz))
    };
    let mut t = Vec::with_capacity(ne.iter().product::<usize>() * 576);
    for ez in 0..ne[2] {
        for ey in 0..ne[1] {
            for ex in 0..ne[0] {
                let ke = if (ex as f64 + 0.5) * h < BEAM_LENGTH / 2.0 { &k_left } else { &k_right };
                let dofs: Vec<Option<usize>> = (0..24)
                    .map(|l| {
                        let a = l / 3;
                        let c = l % 3;
                        free_id(ex + (a & 1), ey + ((a >> 1) & 1), ez + (a >> 2)).map(|v| c * nv + v)
                    })
                    .collect();
                for (i, di) in dofs.iter().enumerate() {
                    let Some(gi) = di else { continue };
                    for (j, dj) in dofs.iter().enumerate() {
                        if let Some(gj) = dj {
                            t.push((*gi, *gj, ke.get(i, j)));
                        }
                    }
                }
            }
        }
    }
    let n = 3 * nv;
    let matrix = CsrMatrix::from_triplets(n, t)?;
    let coords: Vec<[f64; 3]> = (0..nv)
        .map(|v| {
            let [i, j, k] = grid.vertex_index(v);
            [(i + first) as f64 * h, j as f64 * h, k as f64 * h]
        })
        .collect();
    // unit downward traction on the free end, consistent nodal loads
    let mut rhs = vec![0.0; n];
    for ez in 0..ne[2] {
        for ey in 0..ne[1] {
            for (dy, dz) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let v = grid.vertex_id(dims[0] - 1, ey + dy, ez + dz);
                rhs[2 * nv + v] -= h * h / 4.0;
            }
        }
    }
    Ok(ProblemInstance { matrix, coords, grid, components: 3, rhs, label: format!("elasticity-beam-r{refinement}") })
}

/// Two-material cantilever on `[0,8]×[0,1]×[0,1]` with `8r × r × r` cube elements,
/// clamped at `x = 0`; material `left` for `x < 4`, `right` beyond.
pub fn elasticity_hex_beam(refinement: usize, left: Lame, right: Lame) -> Result<ProblemInstance> {
    assemble_beam(refinement, left, right, true)
}

/// Same beam without the clamp; singular, with the rigid body modes as kernel.
pub fn elasticity_hex_beam_free(refinement: usize, left: Lame, right: Lame) -> Result<ProblemInstance> {
    assemble_beam(refinement, left, right, false)
}
