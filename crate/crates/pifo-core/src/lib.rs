//! Core machinery for imitation from observation with proprioceptive
//! policies: tensors, reverse-mode differentiation on a small tape, Adam,
//! three benchmark environments with a deterministic renderer, diagonal
//! Gaussian policies, a convolutional frame discriminator, and PPO with
//! generalized advantage estimation.
//!
//! The crate is `no_std` (with `alloc`). All transcendental math goes through
//! `libm` and all randomness flows through explicitly seeded ChaCha streams,
//! so identically seeded runs replay bit for bit regardless of platform or
//! feature flags.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod adam;
pub mod disc;
pub mod env;
pub mod gfmt;
pub mod graph;
pub mod nn;
pub mod policy;
pub mod rl;
pub mod rng;
pub mod tensor;

mod error;

pub use error::CoreError;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, CoreError>;
