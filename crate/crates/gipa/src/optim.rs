//! Adaptive moment estimation with bias correction and optional decoupled
//! weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{GipaError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled decay applied after the adaptive update.
    pub weight_decay: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        AdamSettings {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Optimizer state, aligned index-for-index with the parameter list.
pub struct Adam {
    settings: AdamSettings,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(settings: AdamSettings, params: &[Tensor]) -> Adam {
        Adam {
            settings,
            t: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    /// One update over all parameters from their accumulated gradients.
    /// Parameters whose gradient is unset (unused branches) are treated as
    /// zero-gradient. Gradients are cleared afterwards.
    pub fn step(&mut self, params: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(GipaError::contract(
                "optimizer_step",
                format!("{} params, state built for {}", params.len(), self.m.len()),
            ));
        }
        self.t += 1;
        let s = self.settings;
        let bc1 = 1.0 - s.beta1.powi(self.t as i32);
        let bc2 = 1.0 - s.beta2.powi(self.t as i32);
        for (i, p) in params.iter().enumerate() {
            let grad = p.grad().unwrap_or_else(|| vec![0.0; p.len()]);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(GipaError::Diverged(format!(
                    "non-finite gradient in parameter {i} at step {}",
                    self.t
                )));
            }
            let mut w = p.to_vec();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..w.len() {
                let g = grad[k];
                m[k] = s.beta1 * m[k] + (1.0 - s.beta1) * g;
                v[k] = s.beta2 * v[k] + (1.0 - s.beta2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                w[k] -= s.learning_rate * m_hat / (v_hat.sqrt() + s.epsilon);
                if s.weight_decay > 0.0 {
                    w[k] -= s.learning_rate * s.weight_decay * w[k];
                }
            }
            p.set_data(&w)?;
            p.zero_grad();
        }
        Ok(())
    }
}
