//! Experiment runner around [`nsi3d_core`]: configuration, scenarios,
//! file formats and benchmarking.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod error;
pub mod io;
pub mod scenario;

pub use error::{AppError, AppResult};
pub use nsi3d_core as core;
