//! Regression estimates whose `l`-th derivative changes sign a few times, from noisy samples.
//!
//! The crate covers the whole pipeline: measurement-design diagnostics,
//! Gasser-Müller kernel derivative estimates, detection of sign changes in a
//! derivative, grid-discretized smoothing splines, sign-constrained spline
//! fits, the two-stage pilot estimator, information criteria for the number
//! of change points, and a Monte Carlo harness.

// `!(x > 0.0)` also rejects NaN; index loops mirror the formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod banded;
pub mod changepoints;
pub mod constrained;
pub mod design;
pub mod error;
pub mod kernels;
pub mod numeric;
pub mod pilot;
pub mod sample;
pub mod selection;
pub mod sim;
pub mod spline;

pub use error::{Error, Result};
pub use sample::SampleSet;
