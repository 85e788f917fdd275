//! Automatic near-field extrinsic calibration between an RGB-D camera and a
//! MIMO imaging radar using a target of four styrofoam spheres with embedded
//! steel balls plus a fifth anchor ball on the backing board.
//!
//! The crate is `no_std` (it needs `alloc`). File formats and the command line
//! live in the `nfcal` crate.

#![no_std]
// Negated comparisons deliberately treat NaN as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod optical;
pub mod ordering;
pub mod pipeline;
pub mod radar;
pub mod ransac;
pub mod registration;
pub mod sensor;
pub mod synthetic;
pub mod target;

pub use error::{Error, Result};
pub use geometry::{Matrix3, Plane, Point3, RigidTransform, SphereModel, Vector3};
pub use sensor::{CameraIntrinsics, DepthCapture, RadarCloud};
pub use target::TargetGeometry;
