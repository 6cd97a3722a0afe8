//! Progressive differentially private graph neural networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: compressed in-edge storage, file ingestion, synthetic SBM
//!   benchmarks, degree bounding and node splits.
//! - [`nn`]: dense MLP kernels with exact analytic (and per-sample) gradients.
//! - [`nap`]: the normalize-aggregate-perturb mechanism and its write-once cache.
//! - [`privacy`]: Renyi-DP accounting, conversion to (epsilon, delta) and noise
//!   calibration for edge- and node-level privacy.
//! - [`dpoptim`]: Adam and DP-Adam (Poisson sampling, clipping, Gaussian noise).
//! - [`trainer`]: cached forward propagation and progressive stage-wise training.
//! - [`experiment`]: run configuration, multi-seed runs, bootstrap intervals and sweeps.

// Validation uses `!(x > 0.0)` style checks on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dpoptim;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod nap;
pub mod nn;
pub mod privacy;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
