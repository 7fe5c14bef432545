//! Scalar abstraction for the numeric core.
//!
//! All tensor math is generic over [`Scalar`] so the same layer code runs in
//! `f32` (training, checkpoints) and `f64` (gradient verification).
//! Reductions accumulate in `f64` regardless of the storage type.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Element type of tensors and parameters.
pub trait Scalar:
    Float + FromPrimitive + NumAssignOps + Debug + Display + Default + Send + Sync + 'static
{
    fn to_acc(self) -> f64;
    fn from_acc(v: f64) -> Self;
}

impl Scalar for f32 {
    #[inline(always)]
    fn to_acc(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn from_acc(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn to_acc(self) -> f64 {
        self
    }
    #[inline(always)]
    fn from_acc(v: f64) -> Self {
        v
    }
}
