//! Synchronization, calibration and accuracy evaluation for handheld
//! lidar-phone mobile mapping.
//!
//! - [`clocksync`]: convex-hull fit of sensor clocks to host arrival times.
//! - [`tempcal`]: lidar-IMU time offset and rotation from angular rates.
//! - [`trajeval`]: association, Umeyama alignment, ATE and RPE.
//! - [`mapping`]: undistortion, aggregation, downsampling, cloud-to-cloud
//!   distance, ICP and image projection.
//! - [`simgen`]: synthetic data with exact ground truth.
//! - [`io`]: TUM, CSV, PLY and key-value files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clocksync;
pub mod error;
pub mod geometry;
pub mod io;
pub mod mapping;
pub mod simgen;
pub mod tempcal;
pub mod trajectory;
pub mod trajeval;

pub use error::{Error, Result};
pub use geometry::{Mat3, Pose, Rotation, Timestamp, Vec3};
pub use trajectory::{interpolate_pose, Trajectory};
