//! AdamW parameter updates with decoupled weight decay and bias correction.

use crate::error::{Error, Result};
use crate::model::VelocityFieldParams;

/// AdamW hyperparameters. Defaults: lr 3e-4, β1 0.9, β2 0.999, eps 1e-8,
/// weight decay 0.01, non-finite gradients rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Tolerant mode clips non-finite gradient entries to zero instead of
    /// erroring. Off by default.
    pub tolerate_nonfinite: bool,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            tolerate_nonfinite: false,
        }
    }
}

/// Per-parameter moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamWState {
    pub config: AdamWConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamWState {
    /// Zero-initialized moments mirroring the parameter shapes.
    pub fn new(config: AdamWConfig, params: &VelocityFieldParams) -> Self {
        let m = params.params.iter().map(|p| vec![0.0; p.data.len()]).collect();
        let v = params.params.iter().map(|p| vec![0.0; p.data.len()]).collect();
        AdamWState { config, m, v, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One AdamW step. Decoupled decay scales parameters by (1 - lr·wd)
    /// first, then the bias-corrected moment update is applied. `grads` is
    /// keyed by position, matching `params.params`.
    pub fn step(&mut self, params: &mut VelocityFieldParams, grads: &[Vec<f64>]) -> Result<()> {
        assert_eq!(grads.len(), params.params.len(), "gradient map misaligned");
        let cfg = self.config;
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);

        for (pi, param) in params.params.iter_mut().enumerate() {
            let g_raw = &grads[pi];
            assert_eq!(g_raw.len(), param.data.len(), "gradient shape misaligned");
            let m = &mut self.m[pi];
            let v = &mut self.v[pi];
            for i in 0..param.data.len() {
                let mut g = g_raw[i];
                if !g.is_finite() {
                    if cfg.tolerate_nonfinite {
                        g = 0.0;
                    } else {
                        return Err(Error::NonFinite {
                            context: format!("gradient of `{}`[{i}]", param.name),
                        });
                    }
                }
                param.data[i] *= 1.0 - cfg.lr * cfg.weight_decay;
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                param.data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}
