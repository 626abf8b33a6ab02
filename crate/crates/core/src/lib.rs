//! Complex classical mechanics for polynomial potentials.
//!
//! The crate computes exact elliptic-function trajectories of the quartic
//! double well `x^4 - 5x^2`, traces the curves in the complex energy plane on
//! which those trajectories close, integrates trajectories of arbitrary
//! polynomial potentials and classifies them as periodic or open.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod dynamics;
pub mod eigencurve;
pub mod elliptic;
pub mod potential;
pub mod quartic;

pub use num_complex::Complex64;
