//! Volumetric null subtraction imaging on a multiplexed matrix array.
//!
//! The crate covers the whole numeric path from array layout to image
//! metrics:
//!
//! - [`geometry`]: the 32×35 gridded probe, its blank wiring rows and the
//!   4-to-1 multiplexer bank/channel map.
//! - [`aperture`]: circular, Fermat spiral, spiral no-reuse and rectangular
//!   masks, and the zero-mean / DC-offset apodization triplets.
//! - [`sequence`]: diverging-wave virtual sources, multiplexed TX/RX event
//!   plans and volume-rate accounting.
//! - [`sim`]: point and speckle phantoms and a point-scatterer RF simulator.
//! - [`beamform`]: delay-and-sum on a voxel grid, envelope detection and the
//!   null subtraction combination.
//! - [`beampattern`]: narrowband array responses for any apodization.
//! - [`metrics`]: beam profiles, FWHM, SMER, CR and CNR.
//!
//! Everything here is `no_std` compatible (with `alloc`). The `std` feature
//! only switches on the `parallel` option, which spreads voxel work over a
//! rayon pool without changing results.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod aperture;
pub mod beamform;
pub mod beampattern;
pub mod error;
pub mod geometry;
pub mod math;
pub mod metrics;
pub mod sequence;
pub mod signal;
pub mod sim;

pub use error::{Error, Result};
pub use math::Vec3;

/// Speed of sound used throughout unless configured otherwise (m/s).
pub const DEFAULT_SOUND_SPEED: f64 = 1540.0;
