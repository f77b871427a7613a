//! Adam with value-then-norm gradient clipping and exponential learning-rate
//! decay.

use serde::{Deserialize, Serialize};
use svrf_autodiff::ParameterStore;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Elementwise clamp bound; `None` disables.
    pub clip_value: Option<f64>,
    /// Global-norm bound applied after the value clamp; `None` disables.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_value: Some(0.1),
            clip_norm: Some(0.1),
        }
    }
}

/// `lr_init · (lr_final/lr_init)^(i/total)`, exact at both ends.
pub fn lr_schedule(i: u64, total: u64, lr_init: f64, lr_final: f64) -> f64 {
    if i == 0 || total == 0 {
        return lr_init;
    }
    if i >= total {
        return lr_final;
    }
    let frac = i as f64 / total as f64;
    (lr_init.ln() * (1.0 - frac) + lr_final.ln() * frac).exp()
}

/// Clamps every entry to `[−clip_value, clip_value]`, then rescales the whole
/// store to global norm at most `clip_norm`. Returns the norm after the
/// value clamp.
pub fn clip_gradients(grads: &mut ParameterStore, clip_value: Option<f64>, clip_norm: Option<f64>) -> f64 {
    if let Some(c) = clip_value {
        for (_, e) in grads.iter_mut() {
            e.values_mut().iter_mut().for_each(|v| *v = v.clamp(-c, c));
        }
    }
    let norm = grads.global_norm();
    if let Some(c) = clip_norm {
        if norm > c {
            let s = c / norm;
            for (_, e) in grads.iter_mut() {
                e.values_mut().iter_mut().for_each(|v| *v *= s);
            }
        }
    }
    norm
}

/// Adam moments mirroring a parameter store.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub first: ParameterStore,
    pub second: ParameterStore,
    pub step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParameterStore) -> Self {
        Self {
            config,
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }

    /// Clips `grads` in place and applies one bias-corrected Adam update.
    /// A non-finite gradient aborts before anything is modified.
    pub fn clip_and_step(&mut self, params: &mut ParameterStore, grads: &mut ParameterStore, lr: f64) -> Result<()> {
        if !params.same_layout(grads) || !params.same_layout(&self.first) {
            return Err(Error::DimensionMismatch("gradients do not mirror parameters".into()));
        }
        if let Some((name, _)) = grads.iter().find(|(_, e)| e.values().iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteGradient(name.to_string()));
        }
        clip_gradients(grads, self.config.clip_value, self.config.clip_norm);
        self.step += 1;
        let AdamConfig {
            beta1, beta2, epsilon, ..
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let entries = params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.first.iter_mut().zip(self.second.iter_mut()));
        for (((_, p), (_, g)), ((_, m), (_, v))) in entries {
            let p = p.values_mut();
            let m = m.values_mut();
            let v = v.values_mut();
            for (k, gk) in g.values().iter().enumerate() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
