//! Plain SGD and Adam over flat tensor lists.
//!
//! The optimizer never sees model structure: parameters and gradients
//! arrive as parallel slices in checkpoint order, and per-tensor moment
//! buffers are kept by position.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimKind {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub kind: OptimKind,
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// L2 penalty folded into the gradient before the step.
    #[serde(default)]
    pub weight_decay: f64,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            kind: OptimKind::Adam,
            lr: 1e-3,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay: 0.0,
        }
    }
}

/// Per-tensor first and second moments plus the step counter.
#[derive(Clone, Debug)]
pub struct OptimState {
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimState {
    pub fn new(tensors: &[&[f64]]) -> OptimState {
        OptimState {
            t: 0,
            m: tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            v: tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update over all tensors. `params` and `grads` must be the
    /// tensor lists this state was created for, in the same order.
    pub fn step(&mut self, config: &OptimConfig, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), self.m.len(), "tensor count changed under the optimizer");
        assert_eq!(params.len(), grads.len());
        self.t += 1;
        let t = self.t as i32;
        match config.kind {
            OptimKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    assert_eq!(p.len(), g.len());
                    for (pv, gv) in p.iter_mut().zip(g.iter()) {
                        let grad = gv + config.weight_decay * *pv;
                        *pv -= config.lr * grad;
                    }
                }
            }
            OptimKind::Adam => {
                let bc1 = 1.0 - config.beta1.powi(t);
                let bc2 = 1.0 - config.beta2.powi(t);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    assert_eq!(p.len(), g.len());
                    for (slot, (pv, gv)) in p.iter_mut().zip(g.iter()).enumerate() {
                        let grad = gv + config.weight_decay * *pv;
                        m[slot] = config.beta1 * m[slot] + (1.0 - config.beta1) * grad;
                        v[slot] = config.beta2 * v[slot] + (1.0 - config.beta2) * grad * grad;
                        let m_hat = m[slot] / bc1;
                        let v_hat = v[slot] / bc2;
                        *pv -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step_is_lr_times_grad() {
        let config = OptimConfig { kind: OptimKind::Sgd, lr: 0.1, ..OptimConfig::default() };
        let mut a = vec![1.0, 2.0];
        let mut b = vec![-3.0];
        let ga = vec![0.5, -1.0];
        let gb = vec![2.0];
        let mut state = OptimState::new(&[&a, &b]);
        state.step(&config, &mut [&mut a, &mut b], &[&ga, &gb]);
        assert_eq!(a, vec![1.0 - 0.05, 2.0 + 0.1]);
        assert_eq!(b, vec![-3.0 - 0.2]);
    }

    #[test]
    fn first_adam_step_is_signed_lr() {
        // After bias correction the first step is lr * g / (|g| + eps):
        // essentially a signed step of size lr wherever the gradient is
        // not tiny.
        let config = OptimConfig::default();
        let mut p = vec![0.5, -0.25, 0.0];
        let g = vec![3.0, -0.04, 0.0];
        let mut state = OptimState::new(&[&p]);
        state.step(&config, &mut [&mut p], &[&g]);
        for (i, (&pv, &gv)) in p.iter().zip([0.5, -0.25, 0.0].iter()).enumerate() {
            let expect = gv - config.lr * g[i] / (g[i].abs() + config.eps);
            assert!((pv - expect).abs() < 1e-15, "slot {i}");
        }
        assert_eq!(state.steps_taken(), 1);
    }

    #[test]
    fn adam_moments_accumulate() {
        let config = OptimConfig { lr: 0.01, ..OptimConfig::default() };
        let mut p = vec![1.0];
        let g = vec![2.0];
        let mut state = OptimState::new(&[&p]);
        // Constant gradient: m_hat = g and v_hat = g^2 at every step, so
        // each update is the same signed step.
        let mut prev = p[0];
        for _ in 0..5 {
            state.step(&config, &mut [&mut p], &[&g]);
            let step = prev - p[0];
            let expect = config.lr * 2.0 / (2.0 + config.eps);
            assert!((step - expect).abs() < 1e-12);
            prev = p[0];
        }
    }

    #[test]
    fn weight_decay_pulls_toward_zero() {
        let config = OptimConfig {
            kind: OptimKind::Sgd,
            lr: 0.1,
            weight_decay: 0.5,
            ..OptimConfig::default()
        };
        let mut p = vec![2.0];
        let g = vec![0.0];
        let mut state = OptimState::new(&[&p]);
        state.step(&config, &mut [&mut p], &[&g]);
        assert!((p[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);
    }
}
