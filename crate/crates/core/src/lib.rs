//! Numerical laboratory for the generalized principal eigenvalue of radial ergodic
//! viscous Hamilton-Jacobi problems
//!
//! ```text
//! lambda - Lap u + b . Du + |Du|^m / m - beta V = 0   in R^d
//! ```
//!
//! with inward radial drift b and a vanishing potential V.

// `!(x > 0.0)` is used on purpose so that NaN lands in the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod banded;
pub mod certificates;
pub mod control_sim;
pub mod error;
pub mod io;
pub mod linear_xcheck;
pub mod model;
pub mod radial_solver;
pub mod sweep_harness;

pub use certificates::{Certificate, PlateauClass, Regime};
pub use error::{Error, Result};
pub use model::{build_coefficients, PotentialKind, ProblemSpec, RadialCoefficients};
pub use radial_solver::{Grid, GridDescriptor, Solution};
