//! Generalized Wannier functions for finite two-dimensional tight-binding
//! insulators.
//!
//! The construction diagonalizes the position operator `X` compressed onto the
//! occupied subspace, groups its spectrum into gap-separated islands, and
//! diagonalizes `Y` inside each island. The resulting basis of the Fermi
//! projection is exponentially localized whenever the islands are uniformly
//! separated, which for the Haldane model happens in the trivial phase. The
//! [`topology`] module detects the obstruction in the Chern phase.

pub mod commands;
pub mod config;
pub mod error;
pub mod lattice;
pub mod localization;
pub mod output;
pub mod pipeline;
pub mod spectral;
pub mod topology;

pub use error::{Error, Result};
pub use faer;
