use serde::{Deserialize, Serialize};

use super::{Gradients, Matrix, ParamStore, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// AdamW with bias-corrected moments and decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<Matrix<T>>,
    pub v: Vec<Matrix<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(config: AdamWConfig, params: &ParamStore<T>) -> Self {
        Self {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn update(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        if grads.params.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer state for {} params, store has {}, gradients {}",
                self.m.len(),
                params.len(),
                grads.params.len()
            )));
        }
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let lr = T::of(c.learning_rate);
        let decay = T::of(1.0 - c.learning_rate * c.weight_decay);
        let (inv_bc1, inv_bc2) = (T::of(1.0 / bc1), T::of(1.0 / bc2));
        let eps = T::of(c.eps);
        for (k, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let g = grads.params[k].as_slice();
            let m = self.m[k].as_mut_slice();
            let v = self.v[k].as_mut_slice();
            let w = params.values_mut(id);
            if g.len() != w.len() {
                return Err(Error::Shape(format!("gradient size mismatch for parameter {k}")));
            }
            for i in 0..w.len() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                let mhat = m[i] * inv_bc1;
                let vhat = v[i] * inv_bc2;
                w[i] = w[i] * decay - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
