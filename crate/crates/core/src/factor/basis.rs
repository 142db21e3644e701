use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Result, SgfError};

/// Polynomial degree of the preserved space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Degree {
    Constant,
    Linear,
    Quadratic,
}

impl Degree {
    pub fn from_usize(d: usize) -> Result<Self> {
        match d {
            0 => Ok(Degree::Constant),
            1 => Ok(Degree::Linear),
            2 => Ok(Degree::Quadratic),
            _ => Err(SgfError::Config(format!("polynomial degree must be 0, 1 or 2, got {d}"))),
        }
    }

    pub fn as_usize(self) -> usize {
        match self {
            Degree::Constant => 0,
            Degree::Linear => 1,
            Degree::Quadratic => 2,
        }
    }

    /// Number of monomials for one scalar component.
    pub fn monomials(self) -> usize {
        match self {
            Degree::Constant => 1,
            Degree::Linear => 4,
            Degree::Quadratic => 10,
        }
    }
}

/// Discretized polynomials evaluated at every unknown, one column per basis function.
#[derive(Clone, Debug)]
pub struct PolyBasis {
    pub pi: DenseMatrix,
    pub degree: Degree,
    pub components: usize,
}

impl PolyBasis {
    pub fn pi_cols(&self) -> usize {
        self.pi.cols()
    }

    pub fn rows(&self, unknowns: &[usize]) -> DenseMatrix {
        self.pi.select_rows(unknowns)
    }

    /// Π restricted to `unknowns`, zero elsewhere (the `Π_B` of a partition set).
    pub fn restricted(&self, unknowns: &[usize]) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.pi.rows(), self.pi.cols());
        for &u in unknowns {
            out.row_mut(u).copy_from_slice(self.pi.row(u));
        }
        out
    }
}

fn monomials(p: [f64; 3], degree: Degree) -> Vec<f64> {
    let [x, y, z] = p;
    let mut m = vec![1.0];
    if degree != Degree::Constant {
        m.extend_from_slice(&[x, y, z]);
    }
    if degree == Degree::Quadratic {
        m.extend_from_slice(&[x * x, y * y, z * z, x * y, y * z, z * x]);
    }
    m
}

/// Builds `Π` for vertices at `coords`.
///
/// With several components per vertex the unknowns are component-major and
/// `Π` is block diagonal with one copy of the scalar basis per component.
/// Each column is scaled to unit max-norm; this leaves the span unchanged.
pub fn build_polynomial_basis(coords: &[[f64; 3]], degree: Degree, components: usize) -> Result<PolyBasis> {
    if !(components == 1 || components == 3) {
        return Err(SgfError::Config(format!("components must be 1 or 3, got {components}")));
    }
    let nv = coords.len();
    let k = degree.monomials();
    let mut pi = DenseMatrix::zeros(nv * components, k * components);
    for (v, &p) in coords.iter().enumerate() {
        let row = monomials(p, degree);
        for c in 0..components {
            pi.row_mut(c * nv + v)[c * k..(c + 1) * k].copy_from_slice(&row);
        }
    }
    for j in 0..pi.cols() {
        let scale = (0..pi.rows()).fold(0.0f64, |m, i| m.max(pi.get(i, j).abs()));
        if scale > 0.0 {
            for i in 0..pi.rows() {
                pi.set(i, j, pi.get(i, j) / scale);
            }
        }
    }
    Ok(PolyBasis { pi, degree, components })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_basis_is_ones() {
        let coords = [[0.3, 0.1, 2.0], [5.0, 1.0, 1.0], [0.0, 0.0, 0.0]];
        let b = build_polynomial_basis(&coords, Degree::Constant, 1).unwrap();
        assert_eq!(b.pi_cols(), 1);
        assert!(b.pi.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn linear_basis_rows() {
        let coords = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let b = build_polynomial_basis(&coords, Degree::Linear, 1).unwrap();
        assert_eq!(b.pi.row(0), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(b.pi.row(1), &[1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn quadratic_columns_and_scaling() {
        let coords = [[1.0, 2.0, 3.0], [2.0, 2.0, 1.0]];
        let b = build_polynomial_basis(&coords, Degree::Quadratic, 1).unwrap();
        assert_eq!(b.pi_cols(), 10);
        // columns x², y², z², xy, yz, zx scaled to unit max-norm
        let raw: [[f64; 6]; 2] = [[1.0, 4.0, 9.0, 2.0, 6.0, 3.0], [4.0, 4.0, 1.0, 4.0, 2.0, 2.0]];
        for j in 0..6 {
            let s = raw[0][j].max(raw[1][j]);
            assert!((b.pi.get(0, 4 + j) - raw[0][j] / s).abs() < 1e-15);
            assert!((b.pi.get(1, 4 + j) - raw[1][j] / s).abs() < 1e-15);
        }
        for j in 0..10 {
            let m = (0..2).fold(0.0f64, |m, i| m.max(b.pi.get(i, j).abs()));
            assert!((m - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn vector_basis_is_block_diagonal() {
        let coords = [[0.0, 0.0, 0.0], [1.0, 1.0, 0.0]];
        let b = build_polynomial_basis(&coords, Degree::Linear, 3).unwrap();
        assert_eq!(b.pi.shape(), (6, 12));
        for c in 0..3 {
            for v in 0..2 {
                let row = b.pi.row(c * 2 + v);
                for (j, &val) in row.iter().enumerate() {
                    if j / 4 != c {
                        assert_eq!(val, 0.0);
                    }
                }
                assert_eq!(row[c * 4], 1.0);
            }
        }
        assert!(build_polynomial_basis(&coords, Degree::Linear, 2).is_err());
    }

    #[test]
    fn pi_columns_by_degree() {
        let coords = [[0.5, 0.25, 0.75]];
        for (d, cols) in [(Degree::Constant, 1), (Degree::Linear, 4), (Degree::Quadratic, 10)] {
            assert_eq!(build_polynomial_basis(&coords, d, 1).unwrap().pi_cols(), cols);
            assert_eq!(build_polynomial_basis(&coords, d, 3).unwrap().pi_cols(), 3 * cols);
        }
    }
}
