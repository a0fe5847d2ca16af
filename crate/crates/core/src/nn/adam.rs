use serde::{Deserialize, Serialize};

use super::params::Params;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for one parameter container, laid out in its flat
/// visiting order.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn for_params<P: Params>(params: &P, config: AdamConfig) -> Self {
        Self::new(params.num_params(), config)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` using `grads`.
    pub fn step<P: Params>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let g = grads.flatten();
        if g.len() != self.first.len() {
            return Err(Error::dim("adam gradient", self.first.len(), g.len()));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("adam gradient"));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let (m, v) = (&mut self.first, &mut self.second);
        let mut i = 0;
        params.visit_mut(&mut |chunk| {
            for p in chunk.iter_mut() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                i += 1;
            }
        });
        Ok(())
    }
}

/// Tracks validation loss and signals a stop after more than `patience`
/// consecutive epochs without strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    pub patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    since_improvement: usize,
    epoch: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            since_improvement: 0,
            epoch: 0,
        }
    }

    /// Record one epoch's loss. Returns `true` when training should stop.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = Some(self.epoch);
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        self.epoch += 1;
        self.since_improvement > self.patience
    }

    pub fn improved_last(&self) -> bool {
        self.since_improvement == 0 && self.best_epoch.is_some()
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }
}
