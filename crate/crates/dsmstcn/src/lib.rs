//! File formats, dataset directories, configuration and parallel fold
//! execution around [`dsmstcn_core`]. The `dsmstcn` binary is a thin
//! command-line layer over this crate.

pub mod config;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod runlog;
pub mod runner;

pub use error::{Error, Result};
