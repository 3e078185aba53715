//! Adam and a reduce-on-plateau learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f32>,
    v: Vec<f32>,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f32], grad: &[f32], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed under Adam");
        self.step += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let step = (lr / bc1) as f32;
        let bc2_sqrt = bc2.sqrt() as f32;
        let eps = self.eps as f32;
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step * *m / (v.sqrt() / bc2_sqrt + eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlateauConfig {
    /// Stagnant epochs tolerated before the rate is cut.
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    /// Relative improvement needed to count as progress.
    pub threshold: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self { patience: 30, factor: 0.5, min_lr: 1e-6, threshold: 1e-4 }
    }
}

impl PlateauConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::invalid("scheduler patience must be >= 1"));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::invalid(format!("scheduler factor must be in (0, 1), got {}", self.factor)));
        }
        if !(self.min_lr >= 0.0) || !(self.threshold >= 0.0) {
            return Err(Error::invalid("scheduler min_lr and threshold must be non-negative"));
        }
        Ok(())
    }
}

/// Cuts the learning rate by `factor` once `patience` consecutive epochs
/// fail to improve on the best loss by the relative threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlateauScheduler {
    cfg: PlateauConfig,
    lr: f64,
    best: f64,
    stagnant: usize,
}

impl PlateauScheduler {
    pub fn new(cfg: PlateauConfig, lr: f64) -> Self {
        Self { cfg, lr, best: f64::INFINITY, stagnant: 0 }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records an epoch loss; returns true when the rate was reduced.
    pub fn step(&mut self, loss: f64) -> bool {
        if loss < self.best * (1.0 - self.cfg.threshold) {
            self.best = loss;
            self.stagnant = 0;
            return false;
        }
        self.stagnant += 1;
        if self.stagnant >= self.cfg.patience {
            self.stagnant = 0;
            let next = (self.lr * self.cfg.factor).max(self.cfg.min_lr);
            let reduced = next < self.lr;
            self.lr = next;
            return reduced;
        }
        false
    }
}
