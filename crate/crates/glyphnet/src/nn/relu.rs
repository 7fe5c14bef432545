//! Rectifier activation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, Tensor};

#[inline]
pub(crate) fn relu_slice<S: Scalar>(xs: &[S]) -> Vec<S> {
    xs.iter().map(|&x| if x > S::zero() { x } else { S::zero() }).collect()
}

#[inline]
pub(crate) fn relu_grad_slice<S: Scalar>(input: &[S], upstream: &[S]) -> Vec<S> {
    input
        .iter()
        .zip(upstream)
        .map(|(&x, &g)| if x > S::zero() { g } else { S::zero() })
        .collect()
}

pub fn relu_forward<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    Tensor::new(input.shape(), relu_slice(input.data())).expect("same shape")
}

pub fn relu_backward<S: Scalar>(input: &Tensor<S>, upstream: &Tensor<S>) -> Result<Tensor<S>> {
    if input.shape() != upstream.shape() {
        return Err(Error::shape(
            "relu_backward",
            format!("{:?}", input.shape()),
            format!("{:?}", upstream.shape()),
        ));
    }
    Tensor::new(input.shape(), relu_grad_slice(input.data(), upstream.data()))
}

pub fn relu_forward_matrix<S: Scalar>(input: &Matrix<S>) -> Matrix<S> {
    Matrix::new(input.rows(), input.cols(), relu_slice(input.data())).expect("same shape")
}

pub fn relu_backward_matrix<S: Scalar>(input: &Matrix<S>, upstream: &Matrix<S>) -> Result<Matrix<S>> {
    if input.rows() != upstream.rows() || input.cols() != upstream.cols() {
        return Err(Error::shape(
            "relu_backward",
            format!("{}x{}", input.rows(), input.cols()),
            format!("{}x{}", upstream.rows(), upstream.cols()),
        ));
    }
    Matrix::new(
        input.rows(),
        input.cols(),
        relu_grad_slice(input.data(), upstream.data()),
    )
}
