//! Dual-scale multi-stage temporal convolutional network (DS-MS-TCN) for
//! sequence-to-sequence activity labeling of wearable IMU recordings.
//!
//! Stage 1 labels individual repetitions (micro scale) from the raw six-channel
//! signal; the following stages turn those probabilities into whole-exercise
//! (macro scale) labels and refine them against over-segmentation.
//!
//! The crate is `no_std` with `alloc`. File formats, the command-line front
//! end and parallel fold execution live in the `dsmstcn` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod harness;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod selfcheck;
pub mod synthgen;

pub use error::{Error, Result};

/// Fixed IMU sample rate in Hz.
pub const SAMPLE_RATE_HZ: usize = 100;
/// Accelerometer x/y/z followed by gyroscope x/y/z.
pub const IMU_CHANNELS: usize = 6;
