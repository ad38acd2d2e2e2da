//! Tail-index estimation for Pareto-type data under random right truncation.
//!
//! The crate provides
//! - Burr sampling with random right truncation ([`model`]),
//! - kernels on `[0, 1)` and their weight functions ([`kernels`]),
//! - the kernel, product-limit weighted Hill, GS and Hill estimators ([`estimators`]),
//! - stability-based selection of `k` ([`threshold`]),
//! - the limiting bias and variance of the kernel estimator together with a
//!   Gaussian-process Monte Carlo check of the variance ([`asymptotics`]),
//! - a deterministic parallel Monte Carlo harness ([`simulation`]).

pub mod asymptotics;
pub mod error;
pub mod estimators;
pub mod kernels;
pub mod model;
pub mod quadrature;
pub mod selftest;
pub mod simulation;
pub mod threshold;

pub use error::{Error, Result};
