//! Adam with bias correction.
//!
//! ```text
//! m = β1·m + (1-β1)·g
//! v = β2·v + (1-β2)·g²
//! θ = θ - lr · (m / (1-β1^τ)) / (sqrt(v / (1-β2^τ)) + ε)
//! ```

use serde::{Deserialize, Serialize};

use super::{cast, Float, Param, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Tensor<F>>,
    second: Vec<Tensor<F>>,
}

impl<F: Float> AdamState<F> {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn second_moments(&self) -> &[Tensor<F>] {
        &self.second
    }

    /// Applies one update to `params` (which must be passed in the same order
    /// every step) and zeroes their gradients.
    pub fn step(&mut self, params: &mut [&mut Param<F>]) -> Result<()> {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Tensor::zeros(&p.value.shape)).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, got {}",
                self.first.len(),
                params.len()
            )));
        }
        for ((p, m), v) in params.iter().zip(&self.first).zip(&self.second) {
            if p.value.shape != m.shape || p.grad.shape != m.shape || v.shape != m.shape {
                return Err(Error::Shape(format!(
                    "parameter {} has shape {:?}, optimizer state {:?}",
                    p.name, p.value.shape, m.shape
                )));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1: F = cast(c.beta1);
        let b2: F = cast(c.beta2);
        let one_b1: F = cast(1.0 - c.beta1);
        let one_b2: F = cast(1.0 - c.beta2);
        let bc1: F = cast(1.0 - c.beta1.powi(t));
        let bc2: F = cast(1.0 - c.beta2.powi(t));
        let lr: F = cast(c.lr);
        let eps: F = cast(c.eps);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.value.data.len() {
                let g = p.grad.data[i];
                let mi = b1 * m.data[i] + one_b1 * g;
                let vi = b2 * v.data[i] + one_b2 * g * g;
                m.data[i] = mi;
                v.data[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                p.value.data[i] = p.value.data[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
            p.zero_grad();
        }
        Ok(())
    }
}
