//! glyphnet: text understanding as image processing.
//!
//! Strings are rasterized with an embedded bitmap font into binarized page
//! images, which a small from-scratch convolutional network classifies or
//! scores. The numerics are generic over the scalar type via [`scalar::Scalar`]
//! (`f32` for speed, `f64` for gradient verification); concrete aliases for
//! the common instantiations live at the crate root.

pub mod augment;
pub mod config;
pub mod datasets;
pub mod dialog;
pub mod error;
pub mod model;
pub mod nn;
pub mod raster;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};

/// f32 tensor, the training workhorse.
pub type TensorF32 = tensor::Tensor<f32>;
/// f64 tensor, used by gradient verification.
pub type TensorF64 = tensor::Tensor<f64>;
pub type MatrixF32 = tensor::Matrix<f32>;
pub type MatrixF64 = tensor::Matrix<f64>;
/// f32 model, what checkpoints store.
pub type ModelF32 = model::Model<f32>;
/// f64 model for finite-difference checks.
pub type ModelF64 = model::Model<f64>;
