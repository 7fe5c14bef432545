//! Fully connected layer.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

use super::{gemm_nn_acc, gemm_nt_acc, gemm_tn_acc};

/// Weights (out_units × in_units, row-major) and bias of a dense layer.
#[derive(Debug, Clone)]
pub struct DenseParams<S> {
    pub weights: Matrix<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> DenseParams<S> {
    pub fn new(weights: Matrix<S>, bias: Vec<S>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::shape("DenseParams::new", weights.rows(), bias.len()));
        }
        Ok(DenseParams { weights, bias })
    }

    pub fn out_units(&self) -> usize {
        self.weights.rows()
    }
    pub fn in_units(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone)]
pub struct DenseGrads<S> {
    pub dweights: Matrix<S>,
    pub dbias: Vec<S>,
    pub dinput: Matrix<S>,
}

/// out = x·W^T + b for each row x of `input` (N × in_units).
pub fn dense_forward<S: Scalar>(input: &Matrix<S>, params: &DenseParams<S>) -> Result<Matrix<S>> {
    if input.cols() != params.in_units() {
        return Err(Error::shape("dense_forward", params.in_units(), input.cols()));
    }
    let n = input.rows();
    let out_u = params.out_units();
    let mut acc = vec![0.0f64; n * out_u];
    for row in acc.chunks_mut(out_u) {
        for (v, b) in row.iter_mut().zip(&params.bias) {
            *v = b.to_acc();
        }
    }
    gemm_nt_acc(n, params.in_units(), out_u, input.data(), params.weights.data(), &mut acc);
    let out = Matrix::new(n, out_u, acc.into_iter().map(S::from_acc).collect())?;
    out.check_finite("dense_forward")?;
    Ok(out)
}

pub fn dense_backward<S: Scalar>(
    input: &Matrix<S>,
    params: &DenseParams<S>,
    upstream: &Matrix<S>,
) -> Result<DenseGrads<S>> {
    if input.cols() != params.in_units() {
        return Err(Error::shape("dense_backward input", params.in_units(), input.cols()));
    }
    if upstream.rows() != input.rows() || upstream.cols() != params.out_units() {
        return Err(Error::shape(
            "dense_backward upstream",
            format!("{}x{}", input.rows(), params.out_units()),
            format!("{}x{}", upstream.rows(), upstream.cols()),
        ));
    }
    let n = input.rows();
    let in_u = params.in_units();
    let out_u = params.out_units();

    // dW = upstream^T · input  (out × in)
    let mut dw = vec![0.0f64; out_u * in_u];
    gemm_tn_acc(out_u, n, in_u, upstream.data(), input.data(), &mut dw);

    let mut db = vec![0.0f64; out_u];
    for row in upstream.data().chunks(out_u) {
        for (a, g) in db.iter_mut().zip(row) {
            *a += g.to_acc();
        }
    }

    // dX = upstream · W  (N × in)
    let mut dx = vec![0.0f64; n * in_u];
    gemm_nn_acc(n, out_u, in_u, upstream.data(), params.weights.data(), &mut dx);

    Ok(DenseGrads {
        dweights: Matrix::new(out_u, in_u, dw.into_iter().map(S::from_acc).collect())?,
        dbias: db.into_iter().map(S::from_acc).collect(),
        dinput: Matrix::new(n, in_u, dx.into_iter().map(S::from_acc).collect())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_input_through() {
        let w = Matrix::new(3, 3, vec![1.0f64, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let p = DenseParams::new(w, vec![0.0; 3]).unwrap();
        let x = Matrix::new(2, 3, vec![1.0, 2.0, 3.0, -4.0, 0.5, 6.0]).unwrap();
        let y = dense_forward(&x, &p).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_weights_output_bias() {
        let p = DenseParams::new(Matrix::zeros(2, 5), vec![1.0f32, 2.0]).unwrap();
        let x = Matrix::new(3, 5, (0..15).map(|i| i as f32).collect()).unwrap();
        let y = dense_forward(&x, &p).unwrap();
        for r in 0..3 {
            assert_eq!(y.row(r), &[1.0, 2.0]);
        }
    }

    #[test]
    fn dimension_mismatch_errors() {
        let p = DenseParams::new(Matrix::<f32>::zeros(2, 5), vec![0.0; 2]).unwrap();
        let x = Matrix::<f32>::zeros(1, 4);
        assert!(dense_forward(&x, &p).is_err());
        let up = Matrix::<f32>::zeros(1, 3);
        let x = Matrix::<f32>::zeros(1, 5);
        assert!(dense_backward(&x, &p, &up).is_err());
    }
}
