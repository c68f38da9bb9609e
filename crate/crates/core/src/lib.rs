//! Cognitive-load detection from wrist PPG (blood volume pulse).
//!
//! The crate covers the whole pipeline:
//!
//! - [`dataset`]: Empatica-style BVP files, dataset manifests and the per-subject
//!   CSV produced by the WESAD converter.
//! - [`windowing`]: fixed-length window extraction with per-condition step sizes.
//! - [`cnn`]: the shallow 1D CNN (two conv layers, max pooling, one hidden dense
//!   layer) with hand-written backpropagation, Adam and early stopping.
//! - [`protocols`]: leave-one-subject-out training from scratch and stress
//!   pretraining followed by fine-tuning, repeated over seeded runs.
//! - [`evaluation`]: weighted F1, Pearson correlation with significance,
//!   per-subject calibration, survey burden percentages and response times.
//! - [`synthetic`]: seeded synthetic BVP generators used by tests and demos.

pub mod cnn;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod protocols;
pub mod seed;
pub mod synthetic;
pub mod windowing;

pub use error::{DatasetError, EvalError, ModelError, ProtocolError, WindowError};
