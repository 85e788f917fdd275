//! File formats, configuration and the `nfcal` command line for the
//! calibration pipeline in `nfcal-core`.

// Negated comparisons deliberately treat NaN as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod capture;
pub mod cli;
pub mod config;
pub mod error;
pub mod ply;
pub mod report;
pub mod scene;

pub use error::{IoError, Result};
