//! Per-distance optimal and drift-maximizing mutation-rate policies for
//! elitist (1+lambda) algorithms on OneMax.
//!
//! The crate computes, by dynamic programming over Hamming distances, the
//! expected remaining optimization time `T(n, lambda, d, rho)` of the
//! (1+lambda) RLS and two (1+lambda) EA variants (standard bit mutation and
//! shift mutation) for every rate on a fixed grid, derives the
//! time-minimizing and drift-maximizing per-distance policies, transforms the
//! tables into regret/efficiency landscapes, and benchmarks concrete
//! parameter-control mechanisms against those lower bounds by simulation.
//!
//! Modules:
//! - [`kernel`]: transition rows under elitist collapse, best-of-lambda order
//!   statistics, drift; float and exact-rational backends.
//! - [`grid`]: the standard rate grids.
//! - [`dp`]: the distance DP, policies, and remaining-time tables.
//! - [`regret`]: regret/efficiency grids, modality analysis, heatmap export.
//! - [`sim`]: Monte-Carlo runs of the algorithms under pluggable controllers.

pub mod dp;
pub mod error;
pub mod grid;
pub mod kernel;
mod numeric;
pub mod regret;
pub mod sim;

pub use error::{Error, Result};
