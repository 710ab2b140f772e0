//! Unpaired multi-exposure HDR fusion with an adversarially trained
//! encoder/residual/decoder generator.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the training precision.

pub mod autograd;
pub mod data;
pub mod error;
pub mod eval;
pub mod image;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod nn;
pub mod optim;
pub mod params;
pub mod radiometry;
pub mod scalar;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Image32 = image::Image<f32>;
pub type Image64 = image::Image<f64>;
pub type ParamStore32 = params::ParamStore<f32>;
