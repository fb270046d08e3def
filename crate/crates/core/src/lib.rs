//! Concept-bottleneck essay grading.
//!
//! Essays are tokenized, embedded and encoded by a bidirectional LSTM; the
//! mean-pooled representation feeds eight independent rubric-concept heads,
//! and the final 0–5 grade is computed by a small feed-forward network that
//! sees nothing but the eight concept scores. Because every grade passes
//! through that bottleneck, instructors can override individual concept
//! scores and get an exact recomputed grade.
//!
//! Modules, bottom-up:
//!
//! - [`numerics`]: tensors, reverse-mode autodiff, losses, Adam
//! - [`nn`]: embedding, BiLSTM, masked mean pooling, affine/MLP layers
//! - [`data`]: concept schema, JSONL datasets, vocabulary, splits, the
//!   synthetic corpus and the mock annotator
//! - [`model`]: the bottleneck model, the black-box baseline, checkpoints
//! - [`train`]: joint loss, training loop, metrics, cross-validation
//! - [`inference`]: grading, interventions, what-if tables

pub mod data;
pub mod error;
pub mod inference;
pub mod model;
pub mod nn;
pub mod numerics;
pub mod train;

pub use error::{Error, Result};
