//! Compositional forecasting of aggregated GPU-cluster demand.
//!
//! The crate is layered bottom-up:
//!
//! - [`numcore`]: tensors, reverse-mode tape, real DFT.
//! - [`traces`]: job-trace aggregation, synthetic workloads, windowing.
//! - [`model`]: the encoder (primitive dictionary + spectral refinement).
//! - [`training`]: composite objective, Adam, the training loop.
//! - [`eval`]: metrics, baselines, ablations, interpretability.

// `!(x >= 0.0)` rejects NaN along with negatives
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eval;
pub mod model;
pub mod numcore;
pub mod traces;
pub mod training;
