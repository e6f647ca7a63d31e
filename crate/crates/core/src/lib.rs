//! Simulation and verification toolkit for stochastic differential equations
//! driven by fractional Brownian motion with Hurst index `H > 1/2`.
//!
//! * [`fbm`] samples fBm paths and estimates their regularity.
//! * [`frac`] evaluates fractional derivatives and the pathwise
//!   generalized Stieltjes integral.
//! * [`coeff`] parses and audits coefficient fields `(b, σ)`.
//! * [`sde`] solves the equation pathwise with a left-point Euler scheme.
//! * [`viability`] checks the deterministic invariance conditions.
//! * [`mc`] runs Monte Carlo experiments against those conditions.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coeff;
pub mod error;
pub mod fbm;
pub mod frac;
pub mod grid;
pub mod mc;
pub mod sampling;
pub mod sde;
pub mod viability;

pub use error::{Error, Result};
pub use grid::GridFunction;

/// Crate version, recorded in run provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
