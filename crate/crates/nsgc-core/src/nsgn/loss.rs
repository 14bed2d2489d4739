//! Per-sample losses with hand-written gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean absolute error; regression with a single output.
    Mae,
    /// Softmax cross-entropy; the target is a class index and the model
    /// emits one logit per class.
    CrossEntropy,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mae => "mae",
            LossKind::CrossEntropy => "cross_entropy",
        }
    }
}

/// Loss value and `d loss / d prediction` for one sample.
pub fn loss_and_grad(kind: LossKind, pred: &[f64], target: f64) -> Result<(f64, Vec<f64>)> {
    match kind {
        LossKind::Mae => {
            if pred.len() != 1 {
                return Err(Error::DimensionMismatch(format!(
                    "mae expects a single output, got {}",
                    pred.len()
                )));
            }
            let diff = pred[0] - target;
            // Subgradient 0 at the kink.
            let g = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            Ok((diff.abs(), vec![g]))
        }
        LossKind::CrossEntropy => {
            let class = target.round();
            if class < 0.0 || class >= pred.len() as f64 || (class - target).abs() > 1e-9 {
                return Err(Error::BadConfig(format!(
                    "cross-entropy target {target} is not a class index below {}",
                    pred.len()
                )));
            }
            let class = class as usize;
            let max = pred.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = pred.iter().map(|&v| (v - max).exp()).sum();
            let lse = max + sum_exp.ln();
            let loss = lse - pred[class];
            let mut grad: Vec<f64> = pred.iter().map(|&v| (v - max).exp() / sum_exp).collect();
            grad[class] -= 1.0;
            Ok((loss, grad))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mae_value_and_signs() {
        let (l, g) = loss_and_grad(LossKind::Mae, &[2.5], 4.0).unwrap();
        assert_eq!(l, 1.5);
        assert_eq!(g, vec![-1.0]);
        let (l, g) = loss_and_grad(LossKind::Mae, &[4.0], 2.5).unwrap();
        assert_eq!(l, 1.5);
        assert_eq!(g, vec![1.0]);
        let (l, g) = loss_and_grad(LossKind::Mae, &[2.5], 2.5).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        // Equal logits over 4 classes: loss = ln 4 regardless of the class.
        let (l, g) = loss_and_grad(LossKind::CrossEntropy, &[0.7, 0.7, 0.7, 0.7], 2.0).unwrap();
        assert!((l - 4.0f64.ln()).abs() < 1e-14);
        for (c, gc) in g.iter().enumerate() {
            let expect = if c == 2 { 0.25 - 1.0 } else { 0.25 };
            assert!((gc - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn cross_entropy_matches_finite_differences() {
        let logits = [0.3, -1.2, 2.0];
        let (_, g) = loss_and_grad(LossKind::CrossEntropy, &logits, 1.0).unwrap();
        let h = 1e-6;
        for i in 0..logits.len() {
            let mut up = logits;
            up[i] += h;
            let mut dn = logits;
            dn[i] -= h;
            let (lu, _) = loss_and_grad(LossKind::CrossEntropy, &up, 1.0).unwrap();
            let (ld, _) = loss_and_grad(LossKind::CrossEntropy, &dn, 1.0).unwrap();
            let fd = (lu - ld) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8, "slot {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn cross_entropy_rejects_bad_targets() {
        assert!(loss_and_grad(LossKind::CrossEntropy, &[0.0, 0.0], 2.0).is_err());
        assert!(loss_and_grad(LossKind::CrossEntropy, &[0.0, 0.0], 0.5).is_err());
        assert!(loss_and_grad(LossKind::CrossEntropy, &[0.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn large_logits_stay_finite() {
        let (l, g) = loss_and_grad(LossKind::CrossEntropy, &[1000.0, 0.0], 0.0).unwrap();
        assert!(l.is_finite() && l >= 0.0);
        assert!(g.iter().all(|v| v.is_finite()));
    }
}
