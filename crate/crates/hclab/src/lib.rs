//! hclab — a desk-scale numerical laboratory for the doubly-critical
//! Hartree–Choquard equation with an inverse-square (Hardy) potential,
//!
//! ```text
//!     -Δu - ϑ u/|x|² = (I_α ∗ |u|^p̄) |u|^{p̄-2} u   on ℝ^N,   p̄ = (N+α)/(N-2),
//! ```
//!
//! restricted to radial profiles. Everything lives on a uniform grid in
//! t = ln r, where the dilation symmetry of the critical problem becomes an
//! exact index shift and the Riesz convolution becomes a log-coordinate
//! correlation with a homogeneous kernel.
//!
//! The crate computes extremals of the Hardy energy over the nonlocal
//! constraint set (the S_ϑ minimization), and certifies the quantitative
//! structure of the problem numerically: the sharp Hardy–Littlewood–Sobolev
//! ratio on its extremal family, weighted-transform and divergence
//! identities, Hardy inequalities, Kelvin covariance, and the two-sided
//! r^{-β} / r^{-(N-2-β)} decay of solutions.

pub mod config;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod params;
pub mod riesz;
pub mod solver;
pub mod verify;

pub mod cli;

mod banded;
mod parallel;
mod quadrature;
mod special;

pub use error::Error;
pub use grid::{LogGrid, RadialField};
pub use params::ProblemParams;
pub use riesz::RieszOperator;
pub use solver::{SolveOptions, SolveResult};

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
