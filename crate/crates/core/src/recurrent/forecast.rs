use super::stack::StackedRecurrentNet;
use crate::error::{Error, Result};
use crate::nn::{fit, Example, Matrix, TrainConfig, TrainReport};
use crate::rng::Rng;

/// Point forecast plus the Monte Carlo samples it averages.
#[derive(Debug, Clone, PartialEq)]
pub struct McForecast {
    pub point: f64,
    pub samples: Vec<f64>,
}

impl McForecast {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let point = mean(&samples);
        McForecast { point, samples }
    }

    /// Apply `f` to every sample and recompute the mean.
    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_samples(self.samples.into_iter().map(f).collect())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Fit with Adam, shuffled mini-batches and early stopping.
pub fn train(
    net: &mut StackedRecurrentNet,
    samples: &[Example<Matrix>],
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainReport> {
    fit(net, samples, config, rng)
}

/// `n_samples` forward passes with independent dropout masks; the point
/// prediction is their mean.
pub fn mc_dropout_predict(
    net: &StackedRecurrentNet,
    window: &Matrix,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<McForecast> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be ≥ 1".into()));
    }
    let samples = (0..n_samples)
        .map(|_| net.forward_sampled(window, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(McForecast::from_samples(samples))
}

/// Multi-step forecast for a single-feature net: each step's prediction is
/// appended to the window (dropping the oldest row) before the next step.
/// With `rng`, every step draws a fresh dropout mask.
pub fn recursive_forecast(
    net: &StackedRecurrentNet,
    window: &Matrix,
    horizons: usize,
    mut rng: Option<&mut Rng>,
) -> Result<Vec<f64>> {
    if net.input_size() != 1 || window.cols() != 1 {
        return Err(Error::InvalidArgument(
            "recursive forecasting needs a single-feature model; multi-feature models use one net per horizon".into(),
        ));
    }
    let mut buf: Vec<f64> = window.as_slice().to_vec();
    let t_len = buf.len();
    let mut out = Vec::with_capacity(horizons);
    for _ in 0..horizons {
        let w = Matrix::from_vec(t_len, 1, buf.clone())?;
        let y = match rng.as_deref_mut() {
            Some(r) => net.forward_sampled(&w, r)?,
            None => net.forward(&w, None)?,
        };
        out.push(y);
        buf.remove(0);
        buf.push(y);
    }
    Ok(out)
}

/// Monte Carlo version of [`recursive_forecast`]: each sample is a full
/// recursive trajectory. Returns one entry per horizon.
pub fn mc_recursive_forecast(
    net: &StackedRecurrentNet,
    window: &Matrix,
    horizons: usize,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<Vec<McForecast>> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be ≥ 1".into()));
    }
    let mut per_h = vec![Vec::with_capacity(n_samples); horizons];
    for _ in 0..n_samples {
        let traj = recursive_forecast(net, window, horizons, Some(rng))?;
        for (h, y) in traj.into_iter().enumerate() {
            per_h[h].push(y);
        }
    }
    Ok(per_h.into_iter().map(McForecast::from_samples).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Params, Trainable};
    use crate::recurrent::cell::CellKind;
    use crate::recurrent::stack::StackConfig;
    use crate::rng::rng_from;

    fn small(kind: CellKind, s: usize, dropout: f64) -> StackConfig {
        StackConfig {
            kind,
            input_size: s,
            hidden: vec![8, 8],
            head_units: 6,
            head_activation: Activation::Tanh,
            dropout,
        }
    }

    fn column(v: &[f64]) -> Matrix {
        Matrix::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    /// A net whose output is `scale · x_last` for inputs of small magnitude:
    /// one linear-regime path through tanh units with compensating weights.
    fn linear_net(scale: f64) -> StackedRecurrentNet {
        let cfg = StackConfig {
            kind: CellKind::Rnn,
            input_size: 1,
            hidden: vec![1],
            head_units: 1,
            head_activation: Activation::Linear,
            dropout: 0.0,
        };
        let mut net = StackedRecurrentNet::zeros(&cfg).unwrap();
        net.encoder.layers[0].gates[0].w.set(0, 0, 1e-4);
        net.head.weights.set(0, 0, 1.0);
        net.output.weights.set(0, 0, scale * 1e4);
        net
    }

    #[test]
    fn constant_net_repeats() {
        let mut net = StackedRecurrentNet::zeros(&small(CellKind::Gru, 1, 0.0)).unwrap();
        net.output.bias[0] = 3.5;
        let f = recursive_forecast(&net, &column(&[1.0, 2.0, 3.0]), 4, None).unwrap();
        assert_eq!(f, vec![3.5; 4]);
    }

    #[test]
    fn identity_on_last_is_fixed_point() {
        let net = linear_net(1.0);
        let f = recursive_forecast(&net, &column(&[0.1, 0.2, 0.3]), 4, None).unwrap();
        for v in f {
            assert!((v - 0.3).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn matches_manual_unroll() {
        let net = linear_net(0.5);
        let window = column(&[0.2, 0.4, 0.8]);
        let f = recursive_forecast(&net, &window, 4, None).unwrap();
        let mut buf = vec![0.2, 0.4, 0.8];
        for fh in f {
            let y = net.forward(&column(&buf), None).unwrap();
            assert_eq!(fh, y);
            buf.remove(0);
            buf.push(y);
        }
        assert!((buf[2] - 0.05).abs() < 1e-6);
    }

    #[test]
    fn horizon_one_equals_forward() {
        let net = StackedRecurrentNet::new(&small(CellKind::Lstm, 1, 0.2), &mut rng_from(1)).unwrap();
        let w = column(&[0.3, 0.1, 0.9]);
        assert_eq!(recursive_forecast(&net, &w, 1, None).unwrap()[0], net.forward(&w, None).unwrap());
    }

    #[test]
    fn multi_feature_recursive_is_error() {
        let net = StackedRecurrentNet::new(&small(CellKind::Rnn, 2, 0.2), &mut rng_from(1)).unwrap();
        assert!(recursive_forecast(&net, &Matrix::zeros(3, 2), 4, None).is_err());
    }

    #[test]
    fn mc_dropout_zero_rate_has_no_spread() {
        let net = StackedRecurrentNet::new(&small(CellKind::Gru, 1, 0.0), &mut rng_from(4)).unwrap();
        let w = column(&[0.5, 0.6, 0.7]);
        let mc = mc_dropout_predict(&net, &w, 50, &mut rng_from(5)).unwrap();
        assert_eq!(mc.samples.len(), 50);
        assert!(mc.samples.iter().all(|&s| s == mc.samples[0]));
        assert_eq!(mc.samples[0], net.forward(&w, None).unwrap());
    }

    #[test]
    fn mc_dropout_positive_rate_spreads() {
        let net = StackedRecurrentNet::new(&small(CellKind::Lstm, 1, 0.2), &mut rng_from(4)).unwrap();
        let w = column(&[0.5, 0.6, 0.7]);
        for seed in 0..5 {
            let mc = mc_dropout_predict(&net, &w, 50, &mut rng_from(seed)).unwrap();
            let m = mc.point;
            let var = mc.samples.iter().map(|s| (s - m).powi(2)).sum::<f64>() / 49.0;
            assert!(var > 0.0);
        }
    }

    #[test]
    fn single_sample_point_is_the_sample() {
        let net = StackedRecurrentNet::new(&small(CellKind::Rnn, 1, 0.2), &mut rng_from(4)).unwrap();
        let mc = mc_dropout_predict(&net, &column(&[1.0, 0.0, 1.0]), 1, &mut rng_from(1)).unwrap();
        assert_eq!(mc.point, mc.samples[0]);
        assert!(mc_dropout_predict(&net, &column(&[1.0]), 0, &mut rng_from(1)).is_err());
    }

    #[test]
    fn training_memorizes_linear_series() {
        let series: Vec<f64> = (0..8).map(|i| 0.1 * i as f64).collect();
        let samples: Vec<Example<Matrix>> = (0..5)
            .map(|t| Example { input: column(&series[t..t + 3]), target: series[t + 3] })
            .collect();
        let mut net = StackedRecurrentNet::new(&small(CellKind::Gru, 1, 0.0), &mut rng_from(12)).unwrap();
        let cfg = TrainConfig { validation_fraction: 0.0, epochs: 500, ..TrainConfig::default() };
        train(&mut net, &samples, &cfg, &mut rng_from(13)).unwrap();
        assert!(net.eval_loss(&samples).unwrap() < 1e-3);
    }

    #[test]
    fn zero_epochs_leave_parameters() {
        let mut net = StackedRecurrentNet::new(&small(CellKind::Rnn, 1, 0.2), &mut rng_from(3)).unwrap();
        let before = net.flatten();
        let samples = vec![Example { input: column(&[1.0, 2.0, 3.0]), target: 1.0 }];
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        train(&mut net, &samples, &cfg, &mut rng_from(1)).unwrap();
        assert_eq!(net.flatten(), before);
    }

    #[test]
    fn training_is_deterministic() {
        let samples: Vec<Example<Matrix>> = (0..10)
            .map(|t| Example { input: column(&[t as f64 * 0.1, 0.5, 0.2]), target: (t % 3) as f64 * 0.3 })
            .collect();
        let run = || {
            let mut net = StackedRecurrentNet::new(&small(CellKind::Lstm, 1, 0.2), &mut rng_from(3)).unwrap();
            let cfg = TrainConfig { epochs: 30, ..TrainConfig::default() };
            train(&mut net, &samples, &cfg, &mut rng_from(4)).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(
            a.train_loss.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.train_loss.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn degenerate_identical_inputs_still_train() {
        let samples: Vec<Example<Matrix>> =
            (0..6).map(|_| Example { input: column(&[0.0, 0.0, 0.0]), target: 0.0 }).collect();
        let mut net = StackedRecurrentNet::new(&small(CellKind::Rnn, 1, 0.2), &mut rng_from(3)).unwrap();
        let cfg = TrainConfig { epochs: 20, ..TrainConfig::default() };
        assert!(train(&mut net, &samples, &cfg, &mut rng_from(4)).is_ok());
    }
}
