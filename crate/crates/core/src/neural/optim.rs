use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Mlp;
use crate::error::{config_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerKind {
    /// Plain SGD whose rate is multiplied by `decay` after every epoch.
    Sgd { learning_rate: f64, decay: f64 },
    Adam {
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl OptimizerKind {
    pub fn adam(learning_rate: f64) -> Self {
        OptimizerKind::Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer hyperparameters plus the mutable state needed to resume.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step: u64,
    pub epoch: u64,
    /// Adam first/second moments; empty for SGD.
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        let (m, v) = match kind {
            OptimizerKind::Sgd { .. } => (Vec::new(), Vec::new()),
            OptimizerKind::Adam { .. } => (alloc::vec![0.0; n_params], alloc::vec![0.0; n_params]),
        };
        Self {
            kind,
            step: 0,
            epoch: 0,
            m,
            v,
        }
    }

    pub fn current_lr(&self) -> f64 {
        match self.kind {
            OptimizerKind::Sgd { learning_rate, decay } => learning_rate * libm::pow(decay, self.epoch as f64),
            OptimizerKind::Adam { learning_rate, .. } => learning_rate,
        }
    }

    pub fn end_epoch(&mut self) {
        self.epoch += 1;
    }

    /// Applies one update in place.
    pub fn step(&mut self, net: &mut Mlp, grad: &[f64]) -> Result<()> {
        if grad.len() != net.n_params() {
            return Err(config_err!("gradient has {} entries, network has {}", grad.len(), net.n_params()));
        }
        let lr = self.current_lr();
        self.step += 1;
        let params = net.params_mut();
        match self.kind {
            OptimizerKind::Sgd { .. } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon, .. } => {
                if self.m.len() != params.len() {
                    return Err(config_err!("optimizer state sized for {} parameters", self.m.len()));
                }
                let t = self.step as f64;
                let c1 = 1.0 - libm::pow(beta1, t);
                let c2 = 1.0 - libm::pow(beta2, t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    params[i] -= lr * mh / (libm::sqrt(vh) + epsilon);
                }
            }
        }
        Ok(())
    }
}

/// Scales `grad` so its Euclidean norm is at most `max_norm`; returns the
/// norm before scaling.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let n = crate::linalg::norm2(grad);
    if n > max_norm && n.is_finite() {
        let s = max_norm / n;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
    n
}
