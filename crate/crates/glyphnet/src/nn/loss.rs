//! Softmax cross-entropy with the max-subtraction trick.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Row-wise softmax, numerically stabilized.
pub fn softmax<S: Scalar>(logits: &Matrix<S>) -> Matrix<S> {
    let k = logits.cols();
    let mut out = Matrix::zeros(logits.rows(), k);
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x.to_acc()));
        let exps: Vec<f64> = row.iter().map(|x| (x.to_acc() - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for (c, e) in exps.into_iter().enumerate() {
            out.set(r, c, S::from_acc(e / sum));
        }
    }
    out
}

/// Mean negative log-likelihood over the batch plus its gradient w.r.t. the
/// logits, grad = (softmax − onehot)/N.
pub fn softmax_cross_entropy<S: Scalar>(
    logits: &Matrix<S>,
    labels: &[usize],
) -> Result<(S, Matrix<S>)> {
    let (n, k) = (logits.rows(), logits.cols());
    if k == 0 {
        return Err(Error::InvalidArg("softmax_cross_entropy: zero classes".into()));
    }
    if labels.len() != n {
        return Err(Error::shape("softmax_cross_entropy labels", n, labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArg(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    logits.check_finite("softmax_cross_entropy logits")?;

    let probs = softmax(logits);
    let mut loss = 0.0f64;
    let mut grad = Matrix::zeros(n, k);
    let inv_n = 1.0 / n as f64;
    for r in 0..n {
        let p = probs.at(r, labels[r]).to_acc();
        loss -= p.max(f64::MIN_POSITIVE).ln();
        for c in 0..k {
            let onehot = if c == labels[r] { 1.0 } else { 0.0 };
            grad.set(r, c, S::from_acc((probs.at(r, c).to_acc() - onehot) * inv_n));
        }
    }
    Ok((S::from_acc(loss * inv_n), grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Matrix::new(2, 4, vec![0.5f64; 8]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 3]).unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
        let probs = softmax(&logits);
        for &p in probs.data() {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_logit_does_not_overflow() {
        let logits = Matrix::new(1, 2, vec![1000.0f32, 0.0]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(loss.is_finite());
        assert!(loss.abs() < 1e-6);
        assert!(grad.data().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn out_of_range_label_is_an_error() {
        let logits = Matrix::new(1, 3, vec![0.0f32; 3]).unwrap();
        assert!(softmax_cross_entropy(&logits, &[3]).is_err());
    }

    #[test]
    fn zero_classes_is_an_error() {
        let logits = Matrix::<f32>::zeros(1, 0);
        assert!(softmax_cross_entropy(&logits, &[0]).is_err());
    }

    #[test]
    fn rows_sum_to_one() {
        let logits = Matrix::new(3, 5, (0..15).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let probs = softmax(&logits);
        for r in 0..3 {
            let s: f64 = probs.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(probs.row(r).iter().all(|&p| p >= 0.0));
        }
    }
}
