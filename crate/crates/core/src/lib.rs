//! Training-free visual token compression.
//!
//! Tokens are grouped by their loadings on the leading principal components
//! of the token matrix, redundant tokens are suppressed inside each group
//! with a threshold that adapts to the image's overall redundancy, and the
//! token budget is split across groups in proportion to what survives.

pub mod baselines;
pub mod budget;
pub mod cli;
mod error;
pub mod grouping;
pub mod io;
pub mod nms;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result};
pub use pipeline::{compress, CompressConfig, Compression, SimilaritySource};
pub use tensor::TokenMatrix;
