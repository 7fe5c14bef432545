//! Framework-free neural network primitives.
//!
//! Convolution, ReLU, dense layers, softmax cross-entropy and SGD live here,
//! all generic over [`crate::Scalar`]. Reductions accumulate in `f64` so the
//! `f32` path stays close enough to finite differences for gradient checks.

pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod loss;
pub mod optim;
pub mod relu;

pub use conv::{conv2d_backward, conv2d_forward, conv2d_forward_im2col, ConvGrads, ConvParams, Padding};
pub use dense::{dense_backward, dense_forward, DenseGrads, DenseParams};
pub use gradcheck::{max_rel_err, GradCheckReport, GroupReport};
pub use loss::{softmax, softmax_cross_entropy};
pub use optim::{Optimizer, OptimizerAlgo};
pub use relu::{relu_backward, relu_forward};

use crate::scalar::Scalar;

/// C[i,j] += Σ_l A[i,l]·B[l,j]; A is m×k, B is k×n, C is m×n in f64.
pub(crate) fn gemm_nn_acc<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], b: &[S], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            let av = av.to_acc();
            if av == 0.0 {
                continue;
            }
            let brow = &b[l * n..(l + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv.to_acc();
            }
        }
    }
}

/// C[i,j] += Σ_l A[i,l]·B[j,l]; A is m×k, B is n×k (B used transposed).
pub(crate) fn gemm_nt_acc<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], b: &[S], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (j, cv) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0f64;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av.to_acc() * bv.to_acc();
            }
            *cv += acc;
        }
    }
}

/// C[i,j] += Σ_l A[l,i]·B[l,j]; A is k×m (used transposed), B is k×n.
pub(crate) fn gemm_tn_acc<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], b: &[S], c: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for l in 0..k {
        let arow = &a[l * m..(l + 1) * m];
        let brow = &b[l * n..(l + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let av = av.to_acc();
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv.to_acc();
            }
        }
    }
}
