//! Sensor fusion for tethered wings flying crosswind on a fixed-length tether.
//!
//! The crate estimates the wing position `p_G`, velocity and velocity angle
//! `gamma` from an IMU (accelerometers plus an attitude quaternion), a GPS,
//! a barometer and a two-encoder line-angle sensor mounted on the ground unit.
//! Three observers are provided, all built on the same steady-state Kalman
//! filter over a discretized double integrator:
//!
//! 1. GPS (horizontal) and barometer (vertical), fused at their own rates.
//! 2. As (1), with the GPS reading projected onto the tether sphere using the
//!    barometric elevation.
//! 3. Line-angle sensor, giving an on-sphere position at every sample.
//!
//! The velocity angle is then obtained by rotating the velocity estimate into
//! the local tangent frame and smoothing it with a two-state Luenberger
//! observer.
//!
//! Module overview:
//! - [frames]: the ground (`G`), local (`L`) and `NED` frames and the
//!   transforms between them.
//! - [attitude]: quaternion algebra and gravity-compensated acceleration.
//! - [lineangle]: encoder geometry of the line-angle sensor.
//! - [estimator]: model matrices, Riccati solver, gains, multi-rate filter.
//! - [pipelines]: the three observers and the velocity-angle observer.
//! - [simkite]: kinematic figure-eight simulator and sensor models.
//! - [evalio]: log format, configuration files and RMSE evaluation.

pub mod attitude;
pub mod error;
pub mod estimator;
pub mod evalio;
pub mod frames;
pub mod lineangle;
pub mod pipelines;
pub mod simkite;

pub use error::{Error, Result};
pub use frames::{Mat3, Vec3};
