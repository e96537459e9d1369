//! Rectified Adam with decoupled weight decay.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::GatParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RAdam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for RAdam {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moments per tensor, plus the number of steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct RAdamState {
    pub step: u64,
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
}

impl RAdamState {
    pub fn new(params: &GatParams) -> Self {
        let zeros: Vec<Array2<f64>> = params
            .named_tensors()
            .iter()
            .map(|(_, t)| Array2::zeros(t.raw_dim()))
            .collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

impl RAdam {
    /// Length of the approximated simple moving average at step `t`.
    pub fn rho(&self, t: u64) -> f64 {
        let rho_inf = 2.0 / (1.0 - self.beta2) - 1.0;
        let b2t = self.beta2.powi(t as i32);
        rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t)
    }

    /// Whether step `t` uses the variance-rectified adaptive update.
    pub fn is_rectified(&self, t: u64) -> bool {
        self.rho(t) > 4.0
    }

    /// Updates one flat tensor in place for step `t >= 1`.
    pub fn update_slice(&self, t: u64, param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64]) {
        let b1t = 1.0 - self.beta1.powi(t as i32);
        let b2t = 1.0 - self.beta2.powi(t as i32);
        let rho_inf = 2.0 / (1.0 - self.beta2) - 1.0;
        let rho = self.rho(t);
        let rect = if rho > 4.0 {
            Some(((rho - 4.0) * (rho - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho)).sqrt())
        } else {
            None
        };
        let decay = 1.0 - self.lr * self.weight_decay;
        for i in 0..param.len() {
            let g = grad[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = m[i] / b1t;
            param[i] *= decay;
            param[i] -= match rect {
                Some(r) => self.lr * r * m_hat / ((v[i] / b2t).sqrt() + self.eps),
                None => self.lr * m_hat,
            };
        }
    }

    pub fn step(&self, params: &mut GatParams, grads: &GatParams, state: &mut RAdamState) {
        state.step += 1;
        let t = state.step;
        let grads = grads.named_tensors();
        for (((p, (_, g)), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(state.m.iter_mut())
            .zip(state.v.iter_mut())
        {
            self.update_slice(
                t,
                p.as_slice_mut().expect("contiguous"),
                g.as_slice().expect("contiguous"),
                m.as_slice_mut().expect("contiguous"),
                v.as_slice_mut().expect("contiguous"),
            );
        }
    }
}
