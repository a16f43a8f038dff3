//! Training laboratory for disentangled, side-aware adversarial domain
//! adaptation on fixed-length signal trials.
//!
//! The crate covers the full loop: synthetic two-domain data generation,
//! source-to-target preprocessing (sliding window, windowed-mean
//! down-sampling, per-trial min-max normalization), a six-network
//! disentangled auto-encoder with adversarial domain/side discriminators,
//! two-stage training with hand-rolled backpropagation, confusion-matrix
//! metrics with per-side breakdowns, and ROC/AUC export. Everything is
//! driven by explicit seeds and is deterministic end to end.

pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
