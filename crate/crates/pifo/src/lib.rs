//! Training pipeline, file formats, and command-line interface for
//! imitation from observation with proprioceptive policies.
//!
//! The numerical substance — environments, networks, PPO, the
//! discriminator — lives in `pifo-core`; this crate adds everything that
//! touches the operating system: checkpoint and demo files, metrics CSV,
//! run directories, thread-parallel collection, SVG reports, and the `pifo`
//! binary itself.

#![deny(unsafe_code)]

pub mod checkpoint;
pub mod cli;
pub mod demo;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod threads;

pub use error::{AppError, FormatError, Result};
