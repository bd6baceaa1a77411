use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::config::OptimConfig;
use crate::error::{Error, Result};

/// `η₀ · cos(7πk / 16K)`.
pub fn cosine_lr(k: u64, total: u64, lr0: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::config("total steps must be positive"));
    }
    if k > total {
        return Err(Error::config(format!("step {k} is past the schedule end {total}")));
    }
    Ok(lr0 * (7.0 * PI * k as f64 / (16.0 * total as f64)).cos())
}

/// One SGD update with heavy-ball or Nesterov momentum.
///
/// Follows the usual deep-learning convention: `d = g + wd·θ`,
/// `buf ← m·buf + d`, and with Nesterov `d ← d + m·buf`; then `θ ← θ − η·d`.
/// With `decoupled_weight_decay` the decay is applied as `θ ← θ − η·wd·θ`
/// and left out of the momentum buffer.
pub fn sgd_step(params: &mut [f64], grad: &[f64], momentum_buf: &mut [f64], lr: f64, cfg: &OptimConfig) -> Result<()> {
    if params.len() != grad.len() || params.len() != momentum_buf.len() {
        return Err(Error::shape(format!(
            "sgd: {} params, {} grads, {} momentum slots",
            params.len(),
            grad.len(),
            momentum_buf.len()
        )));
    }
    let m = cfg.momentum;
    let wd = cfg.weight_decay;
    for ((p, &g), buf) in params.iter_mut().zip(grad).zip(momentum_buf.iter_mut()) {
        let mut d = g;
        if wd != 0.0 && !cfg.decoupled_weight_decay {
            d += wd * *p;
        }
        if m != 0.0 {
            *buf = m * *buf + d;
            d = if cfg.nesterov { d + m * *buf } else { *buf };
        }
        if wd != 0.0 && cfg.decoupled_weight_decay {
            *p -= lr * wd * *p;
        }
        *p -= lr * d;
    }
    Ok(())
}

/// `shadow ← decay·shadow + (1 − decay)·θ`, elementwise.
pub fn ema_update(shadow: &mut [f64], theta: &[f64], decay: f64) -> Result<()> {
    if shadow.len() != theta.len() {
        return Err(Error::shape(format!(
            "ema: shadow has {} values, model has {}",
            shadow.len(),
            theta.len()
        )));
    }
    for (s, &t) in shadow.iter_mut().zip(theta) {
        *s = decay * *s + (1.0 - decay) * t;
    }
    Ok(())
}

/// Exponential moving average of the weights and normalization buffers,
/// used for evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmaModel {
    pub decay: f64,
    pub params: Vec<f64>,
    pub buffers: Vec<f64>,
}

impl EmaModel {
    pub fn new(params: &[f64], buffers: &[f64], decay: f64) -> Self {
        EmaModel {
            decay,
            params: params.to_vec(),
            buffers: buffers.to_vec(),
        }
    }

    pub fn update(&mut self, params: &[f64], buffers: &[f64]) -> Result<()> {
        ema_update(&mut self.params, params, self.decay)?;
        ema_update(&mut self.buffers, buffers, self.decay)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(momentum: f64, nesterov: bool, wd: f64) -> OptimConfig {
        OptimConfig {
            momentum,
            nesterov,
            weight_decay: wd,
            ..OptimConfig::default()
        }
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_lr(0, 100, 0.03).unwrap(), 0.03);
        let end = cosine_lr(100, 100, 0.03).unwrap();
        assert!((end - 0.03 * (7.0 * PI / 16.0).cos()).abs() < 1e-15);
        assert!((end - 0.0058527).abs() < 1e-7);
        assert!(cosine_lr(101, 100, 0.03).is_err());
    }

    #[test]
    fn nesterov_two_steps_by_hand() {
        let c = cfg(0.9, true, 0.0);
        let mut p = [1.0];
        let mut buf = [0.0];
        sgd_step(&mut p, &[1.0], &mut buf, 0.1, &c).unwrap();
        // buf = 1, d = 1 + 0.9 = 1.9
        assert!((p[0] - 0.81).abs() < 1e-15);
        sgd_step(&mut p, &[1.0], &mut buf, 0.1, &c).unwrap();
        // buf = 1.9, d = 1 + 1.71 = 2.71
        assert!((p[0] - (0.81 - 0.271)).abs() < 1e-15);
    }

    #[test]
    fn coupled_decay_shrinks_by_factor() {
        let c = cfg(0.0, false, 5e-4);
        let mut p = vec![2.0, -3.0];
        let mut buf = vec![0.0; 2];
        sgd_step(&mut p, &[0.0, 0.0], &mut buf, 0.03, &c).unwrap();
        let f = 1.0 - 0.03 * 5e-4;
        assert!((p[0] - 2.0 * f).abs() < 1e-15);
        assert!((p[1] + 3.0 * f).abs() < 1e-15);
    }

    #[test]
    fn ema_cases() {
        let mut s = vec![2.0];
        ema_update(&mut s, &[4.0], 0.5).unwrap();
        assert_eq!(s, vec![3.0]);
        ema_update(&mut s, &[10.0], 1.0).unwrap();
        assert_eq!(s, vec![3.0]);
        ema_update(&mut s, &[10.0], 0.0).unwrap();
        assert_eq!(s, vec![10.0]);
        assert!(ema_update(&mut s, &[1.0, 2.0], 0.5).is_err());
    }
}
