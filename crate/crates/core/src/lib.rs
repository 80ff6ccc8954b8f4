//! Geolocation featurization, contrastive location encoders, and a masked
//! Bi-LSTM attention regressor, together with the data pipeline and the
//! within-region / out-of-region evaluation harness used to compare them.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the double-precision types used by the pipeline.

pub mod error;
pub mod evalharness;
pub mod geoenc;
pub mod model;
pub mod nncore;
mod scalar;
pub mod spatialdata;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = nncore::Tensor2<f64>;
pub type TensorF32 = nncore::Tensor2<f32>;
pub type LocationEncoder = geoenc::LocationEncoder<f64>;
pub type Model = model::Model<f64>;
