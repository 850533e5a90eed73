//! Keyphrase generation toolkit.
//!
//! Trains a delimiter-concatenated sequence-to-sequence model with a pointer
//! softmax, semantic-coverage and orthogonal-regularization diversity losses,
//! decodes with self-terminating or exhaustive strategies, and evaluates with
//! variable-number metrics (F1@O, F1@M) alongside the fixed-k classics.

pub mod decode;
pub mod error;
pub mod eval;
pub mod cli;
pub mod corpus;
pub mod loss;
pub mod manifest;
pub mod model;
pub mod text;
pub mod train;

pub use error::{KpError, Result};
