use serde::{Deserialize, Serialize};

use super::params::PcmParams;
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Learning-rate multiplier for the error head. Its targets are a few
    /// thousandths, so full-size steps make it jitter by about the size of
    /// the signal.
    pub eps_head_lr_scale: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            eps_head_lr_scale: 1.0,
        }
    }
}

/// Moment accumulators shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first: PcmParams,
    pub second: PcmParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &PcmParams, config: AdamConfig) -> Self {
        AdamState {
            config,
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected ADAM step.
pub fn adam_update(params: &mut PcmParams, grads: &PcmParams, adam: &mut AdamState) -> Result<()> {
    if grads.hidden() != params.hidden() || adam.first.hidden() != params.hidden() {
        return Err(SimError::Shape("adam state and parameters differ in width".into()));
    }
    adam.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
        eps_head_lr_scale,
    } = adam.config;
    let eps_head = PcmParams::tensor_names().len() - 2;
    let c1 = 1.0 - beta1.powi(adam.step as i32);
    let c2 = 1.0 - beta2.powi(adam.step as i32);
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(adam.first.tensors_mut().into_iter().zip(adam.second.tensors_mut()));
    for (k, ((p, g), (m, v))) in tensors.enumerate() {
        let lr = if k >= eps_head { learning_rate * eps_head_lr_scale } else { learning_rate };
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = PcmParams::zeros(3);
        p.fill(0.25);
        let before = p.clone();
        let mut adam = AdamState::new(&p, AdamConfig::default());
        adam_update(&mut p, &PcmParams::zeros(3), &mut adam).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = PcmParams::zeros(2);
        let mut g = PcmParams::zeros(2);
        g.fc1.w[(0, 0)] = 3.0;
        g.fc1.w[(1, 0)] = -0.5;
        let mut adam = AdamState::new(&p, AdamConfig::default());
        adam_update(&mut p, &g, &mut adam).unwrap();
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε).
        let lr = 5e-5;
        assert!((p.fc1.w[(0, 0)] + lr * 3.0 / (3.0 + 1e-8)).abs() < 1e-20);
        assert!((p.fc1.w[(1, 0)] - lr * 0.5 / (0.5 + 1e-8)).abs() < 1e-20);
    }

    #[test]
    fn constant_gradient_step_tends_to_learning_rate() {
        let mut p = PcmParams::zeros(1);
        let mut g = PcmParams::zeros(1);
        g.fc3.b[0] = 0.7;
        let mut adam = AdamState::new(&p, AdamConfig::default());
        let mut prev = 0.0;
        let mut last_step = 0.0;
        for _ in 0..2000 {
            adam_update(&mut p, &g, &mut adam).unwrap();
            last_step = prev - p.fc3.b[0];
            prev = p.fc3.b[0];
        }
        assert!((last_step - 5e-5).abs() / 5e-5 < 1e-6);
    }

    #[test]
    fn error_head_takes_scaled_steps() {
        let mut p = PcmParams::zeros(2);
        let mut g = PcmParams::zeros(2);
        g.fc3.b[0] = 1.0;
        g.fc4.b[0] = 1.0;
        let cfg = AdamConfig {
            eps_head_lr_scale: 0.01,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(&p, cfg);
        adam_update(&mut p, &g, &mut adam).unwrap();
        assert!((p.fc4.b[0] / p.fc3.b[0] - 0.01).abs() < 1e-9);
    }
}
