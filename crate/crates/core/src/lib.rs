//! Crowd tracking engine core.
//!
//! Three cooperating levels run per pedestrian:
//!
//! - [`tracker`]: a particle filter whose transition is either constant
//!   velocity or the ORCA multi-agent model from [`rvo`].
//! - [`adapt`]: confidence metrics that grow or shrink the particle budget.
//! - [`learn`]: an ensemble Kalman filter over position, velocity and
//!   preferred velocity, with an EM step for the process-noise covariance.
//!
//! [`scenario`] and [`observe`] synthesize ground truth and noisy, occluded
//! observations; [`pipeline`] wires everything into a frame-by-frame session.
//!
//! The crate is `no_std` (with `alloc`) unless the `std` feature is enabled.
//! The `parallel` feature distributes per-agent and per-pedestrian work over
//! rayon; results are identical to sequential execution.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod adapt;
pub mod error;
pub mod geometry;
pub mod learn;
pub mod lp;
mod math;
pub mod metrics;
pub mod observe;
pub mod pipeline;
pub mod rng;
pub mod rvo;
pub mod scenario;
pub mod tracker;

pub use error::{Error, GeometryError};
pub use geometry::{HalfPlane, Mat2, Vec2};
