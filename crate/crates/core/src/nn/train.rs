use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState, EarlyStopper};
use super::params::Params;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// One supervised example: model input plus scalar target.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<I> {
    pub input: I,
    pub target: f64,
}

/// A model with a scalar output that can report its mean-squared-error
/// gradient over a batch.
pub trait Trainable: Params + Clone {
    type Input;

    /// Mean squared error over `batch` and its gradient. When `dropout` is
    /// given, fresh masks are drawn per example.
    fn batch_loss_grad(
        &self,
        batch: &[&Example<Self::Input>],
        dropout: Option<&mut Rng>,
    ) -> Result<(f64, Self)>;

    /// Deterministic (dropout-free) prediction.
    fn predict(&self, input: &Self::Input) -> Result<f64>;

    fn eval_loss(&self, examples: &[Example<Self::Input>]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::Empty("eval_loss"));
        }
        let mut total = 0.0;
        for ex in examples {
            let d = self.predict(&ex.input)? - ex.target;
            total += d * d;
        }
        Ok(total / examples.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    /// Most recent fraction of (chronologically ordered) examples held out
    /// for early stopping.
    pub validation_fraction: f64,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 500,
            patience: 50,
            validation_fraction: 0.2,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }
}

/// Adam with shuffled mini-batches and early stopping. `examples` must be in
/// chronological order; the trailing `validation_fraction` is held out. When
/// the hold-out would be empty the epoch training loss is monitored instead.
/// The parameters with the best monitored loss are restored at the end.
pub fn fit<M: Trainable>(
    model: &mut M,
    examples: &[Example<M::Input>],
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainReport> {
    if examples.is_empty() {
        return Err(Error::Empty("training examples"));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be ≥ 1".into()));
    }
    let n_val = ((examples.len() as f64) * config.validation_fraction).floor() as usize;
    let n_val = if n_val >= examples.len() { 0 } else { n_val };
    let (train, val) = examples.split_at(examples.len() - n_val);

    let mut adam = AdamState::for_params(model, config.adam);
    let mut stopper = EarlyStopper::new(config.patience);
    let mut report = TrainReport::default();
    let mut best = model.clone();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for _ in 0..config.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example<M::Input>> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grad) = model.batch_loss_grad(&batch, Some(&mut *rng))?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            epoch_loss += loss * batch.len() as f64;
            adam.step(model, &grad)?;
        }
        epoch_loss /= train.len() as f64;
        report.train_loss.push(epoch_loss);

        let monitored = if val.is_empty() {
            epoch_loss
        } else {
            let v = model.eval_loss(val)?;
            report.validation_loss.push(v);
            v
        };
        let stop = stopper.observe(monitored);
        if stopper.improved_last() {
            best.clone_from(model);
        }
        if stop {
            report.stopped_early = true;
            break;
        }
    }
    if report.epochs_run() > 0 {
        *model = best;
    }
    report.best_epoch = stopper.best_epoch();
    Ok(report)
}
