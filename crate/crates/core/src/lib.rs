//! Numerical laboratory for boundary regularity of kinetic Fokker–Planck
//! equations on half-spaces.
//!
//! The crate bundles kinetic geometry primitives, the special functions
//! behind the explicit stationary solution `ψ`, quasi-distance barriers with
//! a sampling certifier, a `d = 1` grid solver with a Monte Carlo
//! Feynman–Kac cross-check, and scripted experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN
pub mod barriers;
pub mod certifier;
pub mod config;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod parallel;
pub mod rng;
pub mod solver;
pub mod special;

pub use error::{KfpError, Result};
pub use geometry::PhasePoint;
pub use parallel::Execution;
