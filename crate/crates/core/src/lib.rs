//! Feature-level multimodal anomaly detection for human-robot interaction
//! recordings.
//!
//! Per-clip visual feature vectors are fused with temporally max-pooled robot
//! sensor readings and flattened scene-graph matrices. An autoencoder trained
//! on normal clips reconstructs the fused vectors; per-video min-max
//! normalized reconstruction error is compared against a threshold to flag
//! anomalous clips.

pub mod autoencoder;
pub mod cli;
pub mod dataio;
pub mod detector;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod nn;
pub mod scoring;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
