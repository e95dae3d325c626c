//! Numerical laboratory for Brownian motion with scalar drift on a space of
//! varying dimension: a plane with a shorted disc glued to a half-line at a
//! darning point.
//!
//! The crate provides the glued-space geometry, closed-form Gaussian-type
//! envelope functions with two-sided constant fitting, a conservative 1-D
//! solver for the signed radial process, a reproducible Monte Carlo engine
//! with Girsanov reweighting, the Duhamel perturbation series for the
//! drifted kernel, and Green function estimators on symmetric domains.

pub mod bins;
pub mod cli;
pub mod config;
pub mod drift;
pub mod duhamel;
pub mod error;
pub mod geometry;
pub mod green;
pub mod kernels;
pub mod math;
pub mod pde;
pub mod sim;

pub use error::Error;
