pub mod autodiff;
pub mod boosting;
pub mod dataio;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nnmodels;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
