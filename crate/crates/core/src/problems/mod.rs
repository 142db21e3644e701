//! Model problems and external input.

mod darcy;
mod elasticity;
mod field;
mod mtx;
mod poisson;

pub use darcy::{darcy_tpfa, Face};
pub use elasticity::{
    elasticity_hex_beam, elasticity_hex_beam_free, hex_element_stiffness, rigid_body_modes, Lame, BEAM_LENGTH,
};
pub use field::{read_perm_field, synth_perm_field, tile_field, write_perm_field, ScalarField};
pub use mtx::{read_mtx, write_coords, write_mtx};
pub use poisson::{poisson7, poisson7_unit};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SgfError};
use crate::grid::CartesianGrid;
use crate::sparse::CsrMatrix;

/// An assembled SPD system on a cartesian grid.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub matrix: CsrMatrix,
    /// One point per grid vertex, x-fastest.
    pub coords: Vec<[f64; 3]>,
    pub grid: CartesianGrid,
    pub components: usize,
    pub rhs: Vec<f64>,
    pub label: String,
}

impl ProblemInstance {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Checks dimensions and entrywise symmetry.
    pub fn validate(&self) -> Result<()> {
        let n = self.coords.len() * self.components;
        if self.matrix.dim() != n || self.rhs.len() != n || self.grid.num_unknowns() != n {
            return Err(SgfError::DimensionMismatch(format!(
                "matrix {}, coords×components {n}, rhs {}, grid {}",
                self.matrix.dim(),
                self.rhs.len(),
                self.grid.num_unknowns()
            )));
        }
        if let Some((row, col)) = self.matrix.pattern_asymmetry() {
            return Err(SgfError::NonSymmetricPattern { row, col });
        }
        let asym = self.matrix.relative_asymmetry();
        if asym > 1e-12 {
            return Err(SgfError::NotSymmetric(format!("relative asymmetry {asym:e}")));
        }
        Ok(())
    }
}

/// Uniform random vector in `[-1, 1]`.
pub fn random_rhs(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

pub(crate) fn grid_coords(grid: &CartesianGrid, origin: [f64; 3]) -> Vec<[f64; 3]> {
    (0..grid.num_vertices())
        .map(|v| {
            let idx = grid.vertex_index(v);
            std::array::from_fn(|a| origin[a] + idx[a] as f64 * grid.spacing[a])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_rhs_is_seeded_and_bounded() {
        let a = random_rhs(100, 7);
        assert_eq!(a, random_rhs(100, 7));
        assert_ne!(a, random_rhs(100, 8));
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
