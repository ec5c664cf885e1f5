pub mod dataset;
pub mod descriptors;
pub mod error;
pub mod fingerprint;
pub mod kernels;
pub mod knn;
pub mod krr;
pub mod linalg;
pub mod matrix;
pub mod mlkr;
pub mod par;
pub mod pipeline;
pub mod timing;

pub use error::{Error, Result};
pub use matrix::Matrix;
