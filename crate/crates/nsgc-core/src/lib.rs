//! Dense numerical machinery for non-spatial spectral graph convolution.
//!
//! The crate is organized bottom-up:
//!
//! - [`mat`]: row-major dense matrices and a symmetry-checked wrapper.
//! - [`eigen`]: cyclic Jacobi eigendecomposition of symmetric matrices,
//!   with a canonical eigenvalue ordering used everywhere else.
//! - [`lsq`]: one-sided Jacobi SVD and minimum-norm least squares.
//! - [`graph`]: graph ingestion, canonical matrix representations, and
//!   permutation machinery.
//! - [`spectral`]: spectral transforms `P f(Lambda) P^T`, the fractional
//!   basis `S^eps`, closed-form filtered cosines, and convergence
//!   trajectories.
//! - [`stacks`]: per-graph operator stacks `[T^0, .., T^k]` for the basis
//!   families used by models and filters.
//! - [`filters`]: polynomial graph filters, Vandermonde fitting, a GCN
//!   layer, and truncated diffusion matrices.
//! - [`nsgn`]: the non-spatial graph network with manual reverse-mode
//!   gradients, losses, optimizers, training, and checkpoints.
//! - [`testing`]: reusable helpers for numerical tests (seeded RNG,
//!   random graphs, finite differences, small dense solves).
//!
//! All arithmetic is `f64`. Everything is deterministic for fixed seeds:
//! no randomized pivoting, no hash-order iteration, no thread-dependent
//! reduction orders.

#![forbid(unsafe_code)]

pub mod error;
pub mod mat;

pub mod eigen;
pub mod lsq;

pub mod graph;
pub mod spectral;
pub mod stacks;

pub mod filters;
pub mod nsgn;

pub mod testing;

pub use error::{Error, Result};
pub use mat::{Mat, SymMatrix};
