//! Numerical tools for stationary randomized policies on controlled Markov chains.
//!
//! Grids and measures live in [`measure`], kernels and policies in [`kernel`].
//! [`topology`] computes Young and Borkar distances between policies,
//! [`invariant`] solves for invariant and occupation measures, and
//! [`quantize`] builds quantized and derandomized policies.
pub mod benchmark;
pub mod error;
pub mod experiments;
pub mod invariant;
pub mod kernel;
pub mod measure;
pub mod quantize;
pub mod rng;
pub mod textio;
pub mod topology;
pub use error::{Error, Result};
