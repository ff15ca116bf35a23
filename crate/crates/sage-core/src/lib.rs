//! Core library for SAGE out-of-distribution scoring.
//!
//! The pipeline: train a supervised autoencoder beside a task head, derive
//! three per-sample distribution-shift measures from it (latent neighbour
//! distance, reconstruction error, task uncertainty), convert each to an
//! exceedance probability against the training set, and combine them by
//! geometric mean into a single score in `[0, 1]`. Low scores flag inputs a
//! downstream model should not be trusted on.

pub mod artifact;
pub mod balltree;
pub(crate) mod bytes;
pub mod calibration;
pub mod dataset;
pub mod downstream;
pub mod error;
pub mod evaluation;
pub mod nn;
pub mod pipeline;
pub mod sae;
pub mod scoring;
pub mod synth;
pub mod transforms;

pub use balltree::BallTree;
pub use dataset::LabeledDataset;
pub use error::{Result, SageError};
pub use sae::SaeModel;
pub use scoring::{SageScore, ScoreReference};
