//! Split-sample causal inference with text.
//!
//! A codebook function maps raw text to a low-dimensional outcome (topic proportions from a
//! structural topic model) or treatment (binary latent features from a supervised Indian
//! Buffet Process). It is discovered on a training split, frozen, applied once to the
//! held-out test split, and only then used to estimate effects.

pub mod causal;
pub mod corpus;
pub mod error;
pub mod lab;
pub mod linalg;
pub mod matching;
pub mod optim;
mod serde_matrix;
pub mod sibp;
pub mod splitter;
pub mod stm;
pub mod synth;
pub mod validate;

pub use error::{Error, ErrorClass, Result};
