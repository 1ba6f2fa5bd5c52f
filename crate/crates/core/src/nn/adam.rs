use serde::{Deserialize, Serialize};

use super::Param;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
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

/// Bias-corrected Adam update. Clears the gradient afterwards.
pub fn adam_step(p: &mut Param, lr: f64, cfg: AdamConfig) {
    p.step_count += 1;
    let t = p.step_count as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..p.value.len() {
        let g = p.grad[i];
        let m = cfg.beta1 * p.adam_m[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * p.adam_v[i] + (1.0 - cfg.beta2) * g * g;
        p.adam_m[i] = m;
        p.adam_v[i] = v;
        let m_hat = m / c1;
        let v_hat = v / c2;
        p.value[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    p.zero_grad();
}
