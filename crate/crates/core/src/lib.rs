//! Anytime-learning harness for image classification.
//!
//! Ingests a labeled image dataset, trains a small convolutional classifier
//! under a wall-clock budget, searches augmentation policies once validation
//! performance saturates, and scores timestamped test-set snapshots by the
//! area under the normalized-AUC learning curve.

pub mod augment;
pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod search;
pub mod trainer;

pub use error::{Error, Result};
