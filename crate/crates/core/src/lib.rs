//! Representation-guided training for time series forecasters.
pub mod align;
pub mod dataset;
pub mod embeddings;
pub mod error;
pub mod models;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
