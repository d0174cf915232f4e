//! Mutual-attention siamese networks for bi-temporal change detection.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense tensors with a reverse-mode tape and a finite-difference
//!   gradient checker.
//! - [`attention`]: self- and mutual-attention at global, local, and individual
//!   granularity.
//! - [`model`]: toy encoder stages, weight-shared siamese branches, fusion,
//!   decoding, and checkpoints.
//! - [`data`]: synthetic change pairs, netpbm codecs, dataset loading,
//!   augmentation, and k-fold splits.
//! - [`training`]: cross-entropy loss, AdamW, warmup + poly schedule, and the
//!   training loop.
//! - [`eval`]: confusion counts, IoU/F1, cross-validation, variant comparison,
//!   and attention-map export.
//! - [`cli`]: the `masnet` command-line front end.

pub mod attention;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{Real, Tape, Tensor, Var};
