//! Hyperspectral band classification: Frost despeckling, Gaussian scale-space
//! features and a distance-matching perceptron, plus evaluation metrics.

pub mod cube;
pub mod error;
pub mod rng;

pub use error::{Error, Result};
pub mod frost;
pub mod metrics;
pub mod perceptron;
pub mod scalespace;
