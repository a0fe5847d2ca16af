//! Stacking ensemble: a small dense network over base-model point
//! predictions, evaluated with leave-one-out folds per region and horizon.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{dense_forward, fit, Activation, AdamConfig, DenseParams, Example, Params, TrainConfig, Trainable};
use crate::panel::MinMaxScaler;
use crate::rng::child_rng;

/// Rows are target times, columns base models in a fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasePredictionMatrix {
    pub region: String,
    pub horizon: usize,
    pub columns: Vec<String>,
    /// Time key (week index) of each row.
    pub times: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl BasePredictionMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != self.targets.len() || self.rows.len() != self.times.len() {
            return Err(Error::dim("stacking rows", self.targets.len(), self.rows.len()));
        }
        if let Some(r) = self.rows.iter().find(|r| r.len() != self.columns.len()) {
            return Err(Error::dim("stacking row width", self.columns.len(), r.len()));
        }
        if self.rows.iter().flatten().chain(&self.targets).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("stacking matrix"));
        }
        Ok(())
    }
}

/// Aligns per-model predictions (time → value) with targets. Times some
/// model cannot cover are dropped with a warning and returned.
pub fn collect_base_predictions(
    region: &str,
    horizon: usize,
    models: &[(String, BTreeMap<usize, f64>)],
    targets: &BTreeMap<usize, f64>,
) -> Result<(BasePredictionMatrix, Vec<usize>)> {
    if models.is_empty() {
        return Err(Error::Empty("stacking base models"));
    }
    let mut m = BasePredictionMatrix {
        region: region.to_string(),
        horizon,
        columns: models.iter().map(|(n, _)| n.clone()).collect(),
        times: Vec::new(),
        rows: Vec::new(),
        targets: Vec::new(),
    };
    let mut dropped = Vec::new();
    for (&t, &z) in targets {
        let row: Option<Vec<f64>> = models.iter().map(|(_, p)| p.get(&t).copied()).collect();
        match row {
            Some(row) => {
                m.times.push(t);
                m.rows.push(row);
                m.targets.push(z);
            }
            None => {
                log::warn!("{region} h{horizon}: no base prediction for week {t}; row dropped");
                dropped.push(t);
            }
        }
    }
    Ok((m, dropped))
}

/// `linear(relu(W₁x + b₁))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingNet {
    pub hidden: DenseParams,
    pub output: DenseParams,
}

impl StackingNet {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        StackingNet { hidden: DenseParams::zeros(hidden, inputs), output: DenseParams::zeros(1, hidden) }
    }

    pub fn init(inputs: usize, hidden: usize, rng: &mut crate::rng::Rng) -> Self {
        StackingNet { hidden: DenseParams::init(hidden, inputs, rng), output: DenseParams::init(1, hidden, rng) }
    }

    pub fn inputs(&self) -> usize {
        self.hidden.in_dim()
    }

    /// Raw (unclamped) output.
    pub fn raw(&self, row: &[f64]) -> Result<f64> {
        let h = dense_forward(row, &self.hidden, Activation::Relu)?;
        Ok(dense_forward(&h, &self.output, Activation::Linear)?[0])
    }
}

/// Ensemble prediction for one row of base predictions, clamped at zero.
pub fn stacking_forward(net: &StackingNet, row: &[f64]) -> Result<f64> {
    Ok(net.raw(row)?.max(0.0))
}

impl Params for StackingNet {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.hidden.visit(f);
        self.output.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.hidden.visit_mut(f);
        self.output.visit_mut(f);
    }
}

impl Trainable for StackingNet {
    type Input = Vec<f64>;

    fn batch_loss_grad(&self, batch: &[&Example<Vec<f64>>], _dropout: Option<&mut crate::rng::Rng>) -> Result<(f64, Self)> {
        if batch.is_empty() {
            return Err(Error::Empty("stacking batch"));
        }
        let n = batch.len() as f64;
        let mut g = self.clone();
        g.fill(0.0);
        let mut loss = 0.0;
        let mut h = vec![0.0; self.hidden.out_dim()];
        for ex in batch {
            if ex.input.len() != self.inputs() {
                return Err(Error::dim("stacking input", self.inputs(), ex.input.len()));
            }
            self.hidden.forward_into(&ex.input, Activation::Relu, &mut h);
            let mut y = [0.0];
            self.output.forward_into(&h, Activation::Linear, &mut y);
            let d = y[0] - ex.target;
            loss += d * d;
            let mut dh = vec![0.0; h.len()];
            self.output.backward(&h, &y, &[2.0 * d / n], Activation::Linear, &mut g.output, Some(&mut dh));
            self.hidden.backward(&ex.input, &h, &dh, Activation::Relu, &mut g.hidden, None);
        }
        Ok((loss / n, g))
    }

    fn predict(&self, input: &Vec<f64>) -> Result<f64> {
        self.raw(input)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackingConfig {
    pub hidden_units: usize,
    pub train: TrainConfig,
}

impl Default for StackingConfig {
    fn default() -> Self {
        StackingConfig {
            hidden_units: 32,
            train: TrainConfig {
                batch_size: 8,
                epochs: 200,
                patience: 50,
                validation_fraction: 0.0,
                adam: AdamConfig { learning_rate: 1e-2, ..AdamConfig::default() },
            },
        }
    }
}

/// A trained stacker with the min-max scalers of its training fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingModel {
    pub net: StackingNet,
    pub column_scalers: Vec<MinMaxScaler>,
    pub target_scaler: MinMaxScaler,
    pub final_train_loss: f64,
}

impl StackingModel {
    pub fn fit(rows: &[Vec<f64>], targets: &[f64], config: &StackingConfig, seed: u64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("stacking training rows"));
        }
        if rows.len() != targets.len() {
            return Err(Error::dim("stacking targets", rows.len(), targets.len()));
        }
        let width = rows[0].len();
        if width == 0 {
            return Err(Error::Empty("stacking base models"));
        }
        let column_scalers = (0..width)
            .map(|j| MinMaxScaler::fit(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        let target_scaler = MinMaxScaler::fit(targets)?;
        let mut model = StackingModel {
            net: StackingNet::zeros(width, config.hidden_units),
            column_scalers,
            target_scaler,
            final_train_loss: f64::NAN,
        };
        let examples: Vec<Example<Vec<f64>>> = rows
            .iter()
            .zip(targets)
            .map(|(r, &z)| Ok(Example { input: model.scale_row(r)?, target: model.target_scaler.transform(z) }))
            .collect::<Result<_>>()?;
        let mut rng = child_rng(seed, "stacking");
        model.net = StackingNet::init(width, config.hidden_units, &mut rng);
        fit(&mut model.net, &examples, &config.train, &mut rng)?;
        model.final_train_loss = model.net.eval_loss(&examples)?;
        Ok(model)
    }

    fn scale_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.column_scalers.len() {
            return Err(Error::dim("stacking row width", self.column_scalers.len(), row.len()));
        }
        Ok(row.iter().zip(&self.column_scalers).map(|(v, s)| s.transform(*v)).collect())
    }

    /// Ensemble prediction in count units, clamped at zero.
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        let y = self.net.raw(&self.scale_row(row)?)?;
        Ok(self.target_scaler.inverse(y).max(0.0))
    }
}

/// Held-out prediction for every row, each from a fresh stacker trained on
/// the other rows. Fold `i` is seeded by `(seed, i)` alone.
pub fn loo_train_predict(matrix: &BasePredictionMatrix, config: &StackingConfig, seed: u64) -> Result<Vec<f64>> {
    Ok(loo_models(matrix, config, seed)?.into_iter().map(|(p, _)| p).collect())
}

/// As [`loo_train_predict`], also returning each fold's model.
pub fn loo_models(matrix: &BasePredictionMatrix, config: &StackingConfig, seed: u64) -> Result<Vec<(f64, StackingModel)>> {
    matrix.validate()?;
    let n = matrix.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("leave-one-out stacking needs at least 2 rows, got {n}")));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let rows: Vec<Vec<f64>> = (0..n).filter(|&j| j != i).map(|j| matrix.rows[j].clone()).collect();
            let targets: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| matrix.targets[j]).collect();
            let model = StackingModel::fit(&rows, &targets, config, fold_seed(seed, i))?;
            Ok((model.predict(&matrix.rows[i])?, model))
        })
        .collect()
}

pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    crate::rng::derive_seed(seed, &format!("loo/{fold}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_difference_grad, relative_error, Matrix};
    use crate::rng::rng_from;
    use rand::Rng as _;

    fn quick() -> StackingConfig {
        let mut c = StackingConfig::default();
        c.train.epochs = 40;
        c
    }

    #[test]
    fn zero_params_give_zero() {
        assert_eq!(stacking_forward(&StackingNet::zeros(3, 4), &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(stacking_forward(&StackingNet::zeros(3, 4), &[1.0]).is_err());
    }

    #[test]
    fn hand_set_averaging() {
        let mut net = StackingNet::zeros(3, 2);
        for j in 0..3 {
            net.hidden.weights.set(0, j, 1.0 / 3.0);
        }
        net.output.weights = Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let row = [3.0, 6.0, 12.0];
        assert!((stacking_forward(&net, &row).unwrap() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_check() {
        let mut rng = rng_from(21);
        let mut checked = 0;
        while checked < 20 {
            let net = StackingNet::init(4, 6, &mut rng);
            let batch: Vec<Example<Vec<f64>>> = (0..3)
                .map(|_| Example { input: (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(), target: rng.gen() })
                .collect();
            // Skip draws with a pre-activation near the relu kink.
            let near_kink = batch.iter().any(|ex| {
                let mut z = net.hidden.bias.clone();
                net.hidden.weights.matvec_acc(&ex.input, &mut z);
                z.iter().any(|v| v.abs() < 1e-4)
            });
            if near_kink {
                continue;
            }
            let refs: Vec<_> = batch.iter().collect();
            let (_, g) = net.batch_loss_grad(&refs, None).unwrap();
            let numeric = finite_difference_grad(
                |theta| {
                    let mut q = net.clone();
                    q.load_flat(theta).unwrap();
                    q.batch_loss_grad(&refs, None).unwrap().0
                },
                &net.flatten(),
                1e-6,
            );
            assert!(relative_error(&g.flatten(), &numeric) < 1e-4);
            checked += 1;
        }
    }

    fn matrix(n: usize, width: usize, seed: u64) -> BasePredictionMatrix {
        let mut rng = rng_from(seed);
        let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();
        let rows = targets
            .iter()
            .map(|z| {
                let mut r = vec![*z];
                r.extend((1..width).map(|_| rng.gen_range(0.0..100.0)));
                r
            })
            .collect();
        BasePredictionMatrix {
            region: "R".into(),
            horizon: 1,
            columns: (0..width).map(|j| format!("m{j}")).collect(),
            times: (0..n).collect(),
            rows,
            targets,
        }
    }

    #[test]
    fn collect_aligns_and_drops() {
        let targets: BTreeMap<usize, f64> = (0..5).map(|t| (t, t as f64)).collect();
        let full: BTreeMap<usize, f64> = (0..5).map(|t| (t, 1.0)).collect();
        let (m, dropped) = collect_base_predictions("R", 1, &[("A".into(), full.clone())], &targets).unwrap();
        assert_eq!((m.len(), m.columns.len()), (5, 1));
        assert!(dropped.is_empty());
        let mut partial = full.clone();
        partial.remove(&2);
        let (m, dropped) = collect_base_predictions("R", 1, &[("A".into(), full), ("B".into(), partial)], &targets).unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(dropped, vec![2]);
        assert_eq!(m.times, vec![0, 1, 3, 4]);
    }

    #[test]
    fn loo_counts_and_errors() {
        let m = matrix(6, 2, 1);
        assert_eq!(loo_train_predict(&m, &quick(), 3).unwrap().len(), 6);
        let one = BasePredictionMatrix { rows: vec![vec![1.0, 2.0]], targets: vec![1.0], times: vec![0], ..m };
        assert!(loo_train_predict(&one, &quick(), 3).is_err());
    }

    #[test]
    fn held_out_target_cannot_leak() {
        let m = matrix(8, 3, 2);
        let base = loo_train_predict(&m, &quick(), 5).unwrap();
        for i in [0, 4, 7] {
            let mut p = m.clone();
            p.targets[i] += 1234.5;
            let again = loo_train_predict(&p, &quick(), 5).unwrap();
            assert_eq!(base[i].to_bits(), again[i].to_bits());
            assert!((0..8).filter(|&j| j != i).any(|j| base[j] != again[j]));
        }
    }

    #[test]
    fn deterministic() {
        let m = matrix(6, 3, 4);
        assert_eq!(loo_train_predict(&m, &quick(), 1).unwrap(), loo_train_predict(&m, &quick(), 1).unwrap());
    }

    #[test]
    fn fold_models_fit_an_exact_single_column() {
        let m = matrix(30, 1, 6);
        let folds = loo_models(&m, &StackingConfig::default(), 9).unwrap();
        let good = folds.iter().filter(|(_, f)| f.final_train_loss < 1e-4).count();
        assert!(good >= 27, "{good}/30");
    }

    #[test]
    fn oracle_column_beats_noise() {
        let m = matrix(30, 4, 7);
        let ens = loo_train_predict(&m, &StackingConfig::default(), 11).unwrap();
        let noise: Vec<f64> = m.rows.iter().map(|r| r[1]).collect();
        let e = crate::metrics::rmse(&m.targets, &ens).unwrap();
        let n = crate::metrics::rmse(&m.targets, &noise).unwrap();
        assert!(e <= 0.1 * n, "{e} vs {n}");
    }

    #[test]
    fn predictions_clamped() {
        let mut model = StackingModel::fit(&[vec![1.0], vec![2.0]], &[1.0, 2.0], &quick(), 0).unwrap();
        model.net.output.bias[0] = -100.0;
        assert_eq!(model.predict(&[1.5]).unwrap(), 0.0);
    }
}
