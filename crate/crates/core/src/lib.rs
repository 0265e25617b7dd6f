//! Radar-assisted predictive beamforming for vehicle-to-infrastructure links.
//!
//! A road-side unit (RSU) with a uniform linear array serves vehicles on a
//! straight road. Each epoch the RSU steers one beam per vehicle at the
//! one-step predicted angle, tracks the vehicles from the radar echoes of the
//! downlink signal with an extended Kalman filter, and splits its power
//! budget across beams either for sum-rate (water-filling) or for sensing
//! accuracy under a sum-rate constraint (posterior Cramér-Rao bound
//! minimization).
//!
//! Module map:
//! - [`array`]: steering vectors, echo and link models, noise variances, rates
//! - [`kinematics`]: exact and approximate vehicle state evolution
//! - [`measurement`]: noisy radar and feedback-pilot observations
//! - [`ekf`]: Jacobians, prediction and update of the tracking filter
//! - [`association`]: echo-to-vehicle assignment
//! - [`pcrb`]: posterior Fisher information and its power-separable form
//! - [`allocation`]: water-filling and PCRB-minimizing power allocation
//! - [`harness`]: scenario configuration, Monte-Carlo runs, metrics and output

// `!(x > y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod array;
pub mod association;
pub mod ekf;
mod error;
pub mod harness;
pub mod kinematics;
pub mod measurement;
pub mod pcrb;

pub use error::{Error, Result};

pub use num_complex::Complex64;

/// Degrees to radians.
#[inline]
pub fn deg(x: f64) -> f64 {
    x.to_radians()
}
