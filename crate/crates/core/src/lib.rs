//! Group-sparse block PCA and explained-variance accounting.
//!
//! The crate has five parts:
//!
//! - [`linalg`]: dense matrix primitives (SVD, polar decomposition,
//!   norm-ordered QR) and the geometric diagnostics (RV coefficient,
//!   orthogonality volume) used throughout.
//! - [`grouped`]: the group-variable data model — a data matrix whose
//!   columns are partitioned into groups, group-blocked loading vectors,
//!   and the group ℓ1 norm that induces group-level sparsity.
//! - [`solver`]: the optimization core. A block solver that maximizes a
//!   convex objective over the Stiefel manifold by a polar fixed-point
//!   iteration, a deflation variant, and the plain PCA baseline.
//! - [`variance`]: five definitions of the variance explained by a block
//!   of possibly non-orthogonal components, with per-component
//!   contributions.
//! - [`bench`]: a reproducible synthetic benchmark — data generation from
//!   a planted group-sparse model, recovery metrics, and a replicated
//!   sparsity-parameter sweep across algorithms.

pub mod bench;
pub mod error;
pub mod grouped;
pub mod linalg;
pub mod solver;
pub mod variance;

pub use error::{Error, Result};
pub use grouped::{GroupStructure, GroupedMatrix, LoadingBlock};
pub use linalg::{OrthonormalBlock, PolarResult, QrNormOrdered, SvdResult};
pub use solver::{GspcaResult, Init, SolverConfig, SparsityParams, Weights};
pub use variance::VarianceReport;
