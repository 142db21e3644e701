//! Sparse geometric factorization: hierarchical approximate Cholesky
//! preconditioners for SPD systems on cartesian grids, whose compression steps
//! keep the action of the matrix on low-degree polynomials exact.
//!
//! The usual entry points are [`problems`] to build a system,
//! [`factor::factorize`] to build the preconditioner and [`krylov::pcg`] to solve.

pub mod bench;
pub mod dense;
pub mod error;
pub mod factor;
pub mod grid;
pub mod krylov;
pub mod problems;
pub mod sparse;

pub use error::{Result, SgfError};
pub use factor::{factorize, CompressionMode, Degree, FactorOptions, Preconditioner, RankTrace, Scheme};
pub use problems::ProblemInstance;
