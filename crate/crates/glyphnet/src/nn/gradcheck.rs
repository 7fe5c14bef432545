//! Central-difference gradient verification.
//!
//! The checker works on any scalar loss expressed as a function of a flat
//! `f64` parameter slice, so it stays independent of the backprop code it
//! verifies.

use std::fmt;

/// Relative error between an analytic and a numeric gradient component.
/// Components where both values are negligible count as zero error.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let denom = a.abs().max(n.abs());
        if denom < 1e-6 && (a - n).abs() < 1e-6 {
            continue;
        }
        worst = worst.max((a - n).abs() / denom.max(1e-12));
    }
    worst
}

/// Central differences of `f` at `x` with the given step, one coordinate at a
/// time. `skip` marks coordinates to leave out (reported as 0 gradient).
pub fn central_differences(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &mut Vec<f64>,
    step: f64,
    skip: &dyn Fn(usize) -> bool,
) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        if skip(i) {
            continue;
        }
        let orig = x[i];
        x[i] = orig + step;
        let fp = f(x);
        x[i] = orig - step;
        let fm = f(x);
        x[i] = orig;
        grad[i] = (fp - fm) / (2.0 * step);
    }
    grad
}

#[derive(Debug, Clone)]
pub struct GroupReport {
    pub name: String,
    pub max_rel_err: f64,
}

/// Per-parameter-group worst relative errors from a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.groups.iter().fold(0.0, |m, g| m.max(g.max_rel_err))
    }

    pub fn passed(&self) -> bool {
        self.worst() <= self.tolerance
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.groups {
            writeln!(f, "{:<24} max_rel_err={:.3e}", g.name, g.max_rel_err)?;
        }
        write!(
            f,
            "worst={:.3e} tolerance={:.1e} -> {}",
            self.worst(),
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_for_central_differences() {
        // y = w·x with x = 3, loss = y^2 -> dL/dw = 2·w·x^2.
        let x = 3.0;
        let mut w = vec![0.7];
        let numeric =
            central_differences(|p| (p[0] * x) * (p[0] * x), &mut w, 1e-3, &|_| false);
        let analytic = vec![2.0 * 0.7 * x * x];
        assert!(max_rel_err(&analytic, &numeric) <= 1e-6);
    }

    #[test]
    fn doubled_gradient_reports_half_relative_error() {
        // |2g - g| / max(|2g|, |g|) = 0.5 for any nonzero g.
        let g = vec![0.8, -1.3, 2.5];
        let doubled: Vec<f64> = g.iter().map(|x| 2.0 * x).collect();
        let err = max_rel_err(&doubled, &g);
        assert!((err - 0.5).abs() < 1e-12);
        let report = GradCheckReport {
            groups: vec![GroupReport {
                name: "corrupted".into(),
                max_rel_err: err,
            }],
            tolerance: 1e-3,
        };
        assert!(!report.passed());
    }

    #[test]
    fn skip_mask_leaves_coordinates_untouched() {
        let mut x = vec![1.0, 2.0];
        let g = central_differences(|p| p[0] + p[1], &mut x, 1e-3, &|i| i == 1);
        assert!((g[0] - 1.0).abs() < 1e-9);
        assert_eq!(g[1], 0.0);
    }
}
