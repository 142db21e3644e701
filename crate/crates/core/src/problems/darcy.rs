use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SgfError};
use crate::grid::CartesianGrid;
use crate::sparse::CsrMatrix;

use super::{grid_coords, ProblemInstance, ScalarField};

/// A face of the bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Face {
    pub fn axis(self) -> usize {
        match self {
            Face::XMin | Face::XMax => 0,
            Face::YMin | Face::YMax => 1,
            Face::ZMin | Face::ZMax => 2,
        }
    }

    pub fn is_max(self) -> bool {
        matches!(self, Face::XMax | Face::YMax | Face::ZMax)
    }

    pub fn opposite(self) -> Face {
        match self {
            Face::XMin => Face::XMax,
            Face::XMax => Face::XMin,
            Face::YMin => Face::YMax,
            Face::YMax => Face::YMin,
            Face::ZMin => Face::ZMax,
            Face::ZMax => Face::ZMin,
        }
    }

    fn touches(self, idx: [usize; 3], dims: [usize; 3]) -> bool {
        let a = self.axis();
        if self.is_max() {
            idx[a] + 1 == dims[a]
        } else {
            idx[a] == 0
        }
    }
}

impl FromStr for Face {
    type Err = SgfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "x-min" | "xmin" => Ok(Face::XMin),
            "x-max" | "xmax" => Ok(Face::XMax),
            "y-min" | "ymin" => Ok(Face::YMin),
            "y-max" | "ymax" => Ok(Face::YMax),
            "z-min" | "zmin" => Ok(Face::ZMin),
            "z-max" | "zmax" => Ok(Face::ZMax),
            _ => Err(SgfError::Config(format!("unknown face '{s}'"))),
        }
    }
}

/// Cell-centred two-point flux discretization of `−∇·(λ∇p)`.
///
/// Interior faces carry `harmonic_mean(λ₁, λ₂)·area/h`. The `dirichlet_face`
/// holds `p = 0` at the face, contributing `2λ·area/h` to the diagonal; all
/// other faces are no-flow. The rhs injects a unit flux through the opposite face.
pub fn darcy_tpfa(field: &ScalarField, spacing: [f64; 3], dirichlet_face: Face) -> Result<ProblemInstance> {
    let field = ScalarField::new(field.dims, field.values.clone())?;
    let dims = field.dims;
    let grid = CartesianGrid::new(dims, spacing, 1)?;
    let n = grid.num_vertices();
    let area = [spacing[1] * spacing[2], spacing[0] * spacing[2], spacing[0] * spacing[1]];
    let mut diag = vec![0.0; n];
    let mut t = Vec::with_capacity(7 * n);
    let mut rhs = vec![0.0; n];
    for v in 0..n {
        let idx = grid.vertex_index(v);
        let lam = field.values[v];
        for a in 0..3 {
            let stride = [1, dims[0], dims[0] * dims[1]][a];
            if idx[a] + 1 < dims[a] {
                let w = v + stride;
                let mu = field.values[w];
                let trans = 2.0 * lam * mu / (lam + mu) * area[a] / spacing[a];
                t.push((v, w, -trans));
                t.push((w, v, -trans));
                diag[v] += trans;
                diag[w] += trans;
            }
        }
        if dirichlet_face.touches(idx, dims) {
            let a = dirichlet_face.axis();
            diag[v] += 2.0 * lam * area[a] / spacing[a];
        }
        if dirichlet_face.opposite().touches(idx, dims) {
            rhs[v] += area[dirichlet_face.axis()];
        }
    }
    t.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
    let matrix = CsrMatrix::from_triplets(n, t)?;
    let origin = spacing.map(|h| 0.5 * h);
    Ok(ProblemInstance {
        matrix,
        coords: grid_coords(&grid, origin),
        rhs,
        components: 1,
        label: format!("darcy-{}x{}x{}", dims[0], dims[1], dims[2]),
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::poisson7;

    #[test]
    fn harmonic_transmissibility() {
        let f = ScalarField::new([2, 1, 1], vec![1.0, 3.0]).unwrap();
        let p = darcy_tpfa(&f, [1.0; 3], Face::XMin).unwrap();
        assert!((p.matrix.get(0, 1) + 1.5).abs() < 1e-15);
        assert!((p.matrix.get(0, 0) - (1.5 + 2.0)).abs() < 1e-15);
        assert!((p.matrix.get(1, 1) - 1.5).abs() < 1e-15);
        assert_eq!(p.rhs, vec![0.0, 1.0]);
    }

    #[test]
    fn constant_field_matches_poisson_interior() {
        let f = ScalarField::constant([5, 5, 5], 1.0).unwrap();
        let d = darcy_tpfa(&f, [1.0; 3], Face::ZMin).unwrap();
        let p = poisson7(5, 5, 5, [1.0; 3]).unwrap();
        d.validate().unwrap();
        for v in 0..d.dim() {
            let idx = d.grid.vertex_index(v);
            if idx.iter().all(|&i| i > 0 && i < 4) {
                let a: Vec<_> = d.matrix.row(v).collect();
                let b: Vec<_> = p.matrix.row(v).collect();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn rejects_bad_field() {
        let f = ScalarField { dims: [2, 1, 1], values: vec![1.0, 0.0] };
        assert!(matches!(darcy_tpfa(&f, [1.0; 3], Face::XMin), Err(SgfError::NonPositiveField { index: 1, .. })));
        assert_eq!("x-max".parse::<Face>().unwrap(), Face::XMax);
    }
}
