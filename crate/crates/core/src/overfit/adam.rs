//! Adam with an exponentially decaying step size.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub lr_final: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            lr_final: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    /// Step size at iteration `t` of `total`, geometric from `lr` to `lr_final`.
    pub fn step_size(&self, t: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.lr;
        }
        let frac = t as f64 / (total - 1) as f64;
        self.lr * (self.lr_final / self.lr).powf(frac)
    }
}

/// Moment estimates for a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, len: usize) -> Self {
        Adam {
            cfg,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        let c = AdamConfig::default();
        assert_eq!(c.step_size(0, 100), 0.01);
        assert!((c.step_size(99, 100) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut a = Adam::new(AdamConfig::default(), 2);
        let mut p = [1.0, -1.0];
        a.step(&mut p, &[3.0, -0.5], 0.01);
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] + 0.99).abs() < 1e-9);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut a = Adam::new(AdamConfig::default(), 1);
        let mut p = [2.0];
        for _ in 0..3000 {
            let g = [2.0 * (p[0] - 0.5)];
            a.step(&mut p, &g, 0.01);
        }
        assert!((p[0] - 0.5).abs() < 1e-3);
    }
}
