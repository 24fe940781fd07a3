//! Concept-based voice-disorder detection over pooled speech embeddings.
//!
//! The crate covers the whole path from clinical text to an interactive
//! what-if model:
//!
//! * [`annotation`]: few-shot prompting of a chat-completion endpoint to
//!   extract concept values from anamnesis text, response parsing and
//!   annotation scoring.
//! * [`concepts`]: the concept taxonomy and its one-hot encodings.
//! * [`data`]: frame pooling, dataset files, a synthetic corpus generator and
//!   stratified k-fold splits.
//! * [`nn`]: dense layers, binary cross-entropy, Adam, gradient checking.
//! * [`models`]: concept bottleneck (CBM), concept embedding (CEM), end-to-end
//!   baseline and ideal-concept heads, the joint loss and interventions.
//! * [`training`]: the joint-loss trainer with warm-up and early stopping,
//!   metrics and cross-validation.
//! * [`service`]: an HTTP API for prediction and concept intervention.
//!
//! Runnable walkthroughs live in `examples/`; `cargo run --example` lists them.

pub mod annotation;
pub mod concepts;
pub mod data;
mod error;
pub mod models;
pub mod nn;
pub mod service;
pub mod training;

pub use error::{Error, RecordProblem, Result};
