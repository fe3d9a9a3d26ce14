use serde::{Deserialize, Serialize};

use super::RetargetError;

/// Step for the central-difference gradient used by [`adam_minimize`].
pub const GRADIENT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub iterations: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            iterations: 200,
        }
    }
}

/// Adam state for one parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    /// One bias-corrected update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let AdamConfig {
            lr, beta1, beta2, eps, ..
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

pub fn central_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let xi = probe[i];
            probe[i] = xi + h;
            let fp = f(&probe);
            probe[i] = xi - h;
            let fm = f(&probe);
            probe[i] = xi;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Result of [`adam_minimize`].
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
}

/// Runs a fixed budget of Adam iterations with finite-difference gradients and
/// returns the best iterate seen.
pub fn adam_minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], cfg: &AdamConfig) -> Result<Minimum, RetargetError> {
    let mut x = x0.to_vec();
    let mut opt = Adam::new(x.len(), cfg.clone());
    let mut best = Minimum {
        value: f(&x),
        x: x.clone(),
    };
    if !best.value.is_finite() {
        return Err(RetargetError::NonFinite { iteration: 0 });
    }
    for it in 0..cfg.iterations {
        let grad = central_gradient(&f, &x, GRADIENT_FD_STEP);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(RetargetError::NonFinite { iteration: it });
        }
        opt.step(&mut x, &grad);
        let value = f(&x);
        if !value.is_finite() {
            return Err(RetargetError::NonFinite { iteration: it + 1 });
        }
        if value < best.value {
            best = Minimum { x: x.clone(), value };
        }
    }
    Ok(best)
}
