use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use super::ApproxError;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam moment accumulators for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(net: &Mlp<T>, config: AdamConfig) -> AdamState<T> {
        let n = net.param_count();
        AdamState { config, m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0 }
    }

    pub fn timestep(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam step. A non-finite gradient aborts before
    /// anything is modified.
    pub fn update(&mut self, params: &mut Mlp<T>, grads: &Gradients<T>) -> Result<(), ApproxError> {
        if params.param_count() != self.m.len() {
            return Err(ApproxError::Shape("optimizer state does not match network".into()));
        }
        if grads.layers.len() != params.layers().len()
            || grads.layers.iter().zip(params.layers()).any(|(g, p)| g.inputs != p.inputs || g.outputs != p.outputs)
        {
            return Err(ApproxError::Shape("gradient shape does not match network".into()));
        }
        if !grads.is_finite() {
            return Err(ApproxError::NonFinite);
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let one = T::one();
        let correction1 = one - b1.powi(self.t as i32);
        let correction2 = one - b2.powi(self.t as i32);
        let lr = T::of(c.lr);
        let eps = T::of(c.epsilon);
        for (((p, &g), m), v) in params
            .params_mut()
            .zip(grads.values())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}
