//! Plain SGD and SGD with momentum.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerAlgo {
    Sgd,
    /// v ← μ·v − lr·g, p ← p + v
    Momentum { mu: f64 },
}

/// Optimizer state: one velocity buffer per parameter group, in the order the
/// groups are handed to [`Optimizer::step`].
#[derive(Debug, Clone)]
pub struct Optimizer<S> {
    pub algo: OptimizerAlgo,
    pub learning_rate: f64,
    velocities: Vec<Vec<S>>,
}

impl<S: Scalar> Optimizer<S> {
    pub fn new(algo: OptimizerAlgo, learning_rate: f64, group_sizes: &[usize]) -> Result<Self> {
        if learning_rate < 0.0 || !learning_rate.is_finite() {
            return Err(Error::InvalidArg(format!(
                "learning rate must be finite and >= 0, got {learning_rate}"
            )));
        }
        if let OptimizerAlgo::Momentum { mu } = algo {
            if !(0.0..1.0).contains(&mu) {
                return Err(Error::InvalidArg(format!(
                    "momentum must be in [0,1), got {mu}"
                )));
            }
        }
        Ok(Optimizer {
            algo,
            learning_rate,
            velocities: group_sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
        })
    }

    pub fn velocities(&self) -> &[Vec<S>] {
        &self.velocities
    }

    pub fn step(&mut self, params: &mut [&mut [S]], grads: &[&[S]]) -> Result<()> {
        if params.len() != self.velocities.len() || grads.len() != self.velocities.len() {
            return Err(Error::shape("optimizer groups", self.velocities.len(), params.len()));
        }
        let lr = S::from_acc(self.learning_rate);
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocities) {
            if p.len() != v.len() || g.len() != v.len() {
                return Err(Error::shape("optimizer group size", v.len(), p.len()));
            }
            match self.algo {
                OptimizerAlgo::Sgd => {
                    for (pi, &gi) in p.iter_mut().zip(g.iter()) {
                        *pi = *pi - lr * gi;
                    }
                }
                OptimizerAlgo::Momentum { mu } => {
                    let mu = S::from_acc(mu);
                    for ((pi, &gi), vi) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                        *vi = mu * *vi - lr * gi;
                        *pi = *pi + *vi;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lr_is_identity() {
        let mut opt = Optimizer::<f32>::new(OptimizerAlgo::Momentum { mu: 0.9 }, 0.0, &[3]).unwrap();
        let mut p = vec![1.0f32, -2.0, 0.5];
        let g = vec![10.0f32, 10.0, 10.0];
        opt.step(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn plain_sgd_step() {
        let mut opt = Optimizer::<f64>::new(OptimizerAlgo::Sgd, 0.1, &[1]).unwrap();
        let mut p = vec![1.0f64];
        opt.step(&mut [&mut p], &[&[0.5]]).unwrap();
        assert!((p[0] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn momentum_two_steps_hand_unrolled() {
        // v1 = -0.1, p1 = p0 - 0.1; v2 = 0.9*(-0.1) - 0.1 = -0.19, p2 = p1 - 0.19.
        let mut opt =
            Optimizer::<f64>::new(OptimizerAlgo::Momentum { mu: 0.9 }, 0.1, &[1]).unwrap();
        let p0 = 2.0;
        let mut p = vec![p0];
        opt.step(&mut [&mut p], &[&[1.0]]).unwrap();
        assert!((p[0] - (p0 - 0.1)).abs() < 1e-12);
        opt.step(&mut [&mut p], &[&[1.0]]).unwrap();
        assert!((p[0] - (p0 - 0.29)).abs() < 1e-12);
    }

    #[test]
    fn group_size_mismatch_is_an_error() {
        let mut opt = Optimizer::<f32>::new(OptimizerAlgo::Sgd, 0.1, &[2]).unwrap();
        let mut p = vec![0.0f32; 3];
        assert!(opt.step(&mut [&mut p], &[&[0.0f32; 3]]).is_err());
    }

    #[test]
    fn invalid_hyperparams_rejected() {
        assert!(Optimizer::<f32>::new(OptimizerAlgo::Sgd, f64::NAN, &[1]).is_err());
        assert!(Optimizer::<f32>::new(OptimizerAlgo::Momentum { mu: 1.0 }, 0.1, &[1]).is_err());
    }
}
