//! Adam optimizer over a named parameter set.
//!
//! First and second moment estimates live in `ParamSet`s keyed by the
//! same tensor names as the model, which lets checkpoints carry them as
//! plain extra tensors (prefixed `opt.m.` / `opt.v.`) and makes resumed
//! runs bit-identical to uninterrupted ones. The update count is the
//! trainer's global step and is passed in rather than stored.

use ndarray::{Array2, Zip};
use thiserror::Error;

use crate::nn::network::ParamSet;

#[derive(Debug, Error)]
pub enum AdamError {
    #[error("optimizer state missing tensor {0:?}")]
    MissingState(String),
    #[error("gradient/parameter shape mismatch for {0:?}")]
    ShapeMismatch(String),
}

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub struct Adam {
    config: AdamConfig,
    m: ParamSet<f32>,
    v: ParamSet<f32>,
}

impl Adam {
    /// Fresh zeroed state shaped like `params`.
    pub fn new(config: AdamConfig, params: &ParamSet<f32>) -> Self {
        let mut m = ParamSet::new();
        let mut v = ParamSet::new();
        for (name, tensor) in params.iter() {
            m.insert(name, Array2::zeros(tensor.dim()));
            v.insert(name, Array2::zeros(tensor.dim()));
        }
        Adam { config, m, v }
    }

    /// Rebuild from checkpoint tensors named `m.<param>` / `v.<param>`.
    pub fn from_state(
        config: AdamConfig,
        params: &ParamSet<f32>,
        state: &ParamSet<f32>,
    ) -> Result<Self, AdamError> {
        let mut m = ParamSet::new();
        let mut v = ParamSet::new();
        for (name, tensor) in params.iter() {
            for (prefix, set) in [("m", &mut m), ("v", &mut v)] {
                let key = format!("{prefix}.{name}");
                let stored = state
                    .get(&key)
                    .ok_or_else(|| AdamError::MissingState(key.clone()))?;
                if stored.dim() != tensor.dim() {
                    return Err(AdamError::ShapeMismatch(key));
                }
                set.insert(name, stored.clone());
            }
        }
        Ok(Adam { config, m, v })
    }

    /// Flatten moments into checkpoint-ready tensors.
    pub fn state(&self) -> ParamSet<f32> {
        let mut out = ParamSet::new();
        for (name, tensor) in self.m.iter() {
            out.insert(format!("m.{name}"), tensor.clone());
        }
        for (name, tensor) in self.v.iter() {
            out.insert(format!("v.{name}"), tensor.clone());
        }
        out
    }

    /// One update with bias correction; `t` is the 1-based update count.
    pub fn step(
        &mut self,
        params: &mut ParamSet<f32>,
        grads: &ParamSet<f32>,
        lr: f32,
        t: u64,
    ) -> Result<(), AdamError> {
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(t as i32);
        let bc2 = 1.0 - beta2.powi(t as i32);
        for (name, param) in params.iter_mut() {
            let grad = grads
                .get(name)
                .ok_or_else(|| AdamError::MissingState(name.to_string()))?;
            if grad.dim() != param.dim() {
                return Err(AdamError::ShapeMismatch(name.to_string()));
            }
            let m = self.m.get_mut(name).expect("moment shaped like params");
            Zip::from(&mut *m).and(grad).for_each(|m, &g| {
                *m = beta1 * *m + (1.0 - beta1) * g;
            });
            let v = self.v.get_mut(name).expect("moment shaped like params");
            Zip::from(&mut *v).and(grad).for_each(|v, &g| {
                *v = beta2 * *v + (1.0 - beta2) * g * g;
            });
            let (m, v) = (
                self.m.get(name).unwrap(),
                self.v.get(name).unwrap(),
            );
            Zip::from(param).and(m).and(v).for_each(|p, &m, &v| {
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
        Ok(())
    }
}
