//! The factorization engine.

mod basis;
mod block;
mod engine;
mod precond;
mod trace;

pub use basis::{build_polynomial_basis, Degree, PolyBasis};
pub use block::{assemble_block_matrix, BlockMatrix};
pub use engine::{factorize_matrix, CompressionMode, FactorOptions, Factorizer, NodeState, Scheme};
pub use precond::{Coupling, ElementaryFactor, FactorStats, LevelStats, Preconditioner, PreconditionerInfo};
pub use trace::{RankEntry, RankTrace};

use crate::error::Result;
use crate::grid::{build_general_hierarchy, build_nested_hierarchy, PartitionHierarchy, PartitionKind};
use crate::problems::ProblemInstance;

/// Partition hierarchy matching the scheme.
pub fn build_hierarchy(problem: &ProblemInstance, options: &FactorOptions) -> Result<PartitionHierarchy> {
    match options.scheme.partition() {
        PartitionKind::Nested => build_nested_hierarchy(&problem.grid, options.b()),
        PartitionKind::General => build_general_hierarchy(&problem.grid, options.b()),
    }
}

/// Builds hierarchy and polynomial basis for `problem`, then factorizes.
pub fn factorize(problem: &ProblemInstance, options: FactorOptions) -> Result<Preconditioner> {
    let hierarchy = build_hierarchy(problem, &options)?;
    let basis = build_polynomial_basis(&problem.coords, options.degree, problem.components)?;
    factorize_matrix(&problem.matrix, &hierarchy, &basis, options)
}
