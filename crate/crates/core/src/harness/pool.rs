//! Training one neural method on one pool of regions, and forecasting with
//! the result.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::methods::{FeatureMode, Method};
use crate::attention::{direct_examples, MultiSourceConfig, MultiSourceNet};
use crate::error::{Error, Result};
use crate::nn::{fit, Activation, Matrix};
use crate::panel::{PanelScaler, WeeklyPanel, CF};
use crate::recurrent::{mc_recursive_forecast, CellKind, McForecast, StackConfig, StackedRecurrentNet};
use crate::rng::{child_rng, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PoolNets {
    /// Single-feature net rolled forward one week at a time.
    Recursive(StackedRecurrentNet),
    /// Multivariate net per horizon.
    Stacked(Vec<(usize, StackedRecurrentNet)>),
    /// Attention net per horizon.
    Attention(Vec<(usize, MultiSourceNet)>),
}

/// Trained networks for one (method, pool, origin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolModel {
    pub method: String,
    /// Panel feature indices feeding the input window, in column order.
    pub features: Vec<usize>,
    pub window: usize,
    pub nets: PoolNets,
}

/// Panel indices of the configured features; CF first for single-feature
/// methods.
pub fn input_features(panel: &WeeklyPanel, config: &ExperimentConfig, mode: FeatureMode) -> Result<Vec<usize>> {
    match mode {
        FeatureMode::Single => Ok(vec![panel.feature_index(CF)?]),
        _ => config.features().iter().map(|f| panel.feature_index(f)).collect(),
    }
}

/// Seed key shared by every pooling of the same cell and input layout, so a
/// singleton pool trains exactly like its vanilla counterpart.
pub fn pool_seed_key(cell: CellKind, mode: FeatureMode, origin: &str, first_member: &str) -> String {
    format!("{}/{mode:?}/{origin}/{first_member}", cell.name())
}

/// Trains `method` on the regions `members` of the training panel `train`.
pub fn train_pool(
    train: &WeeklyPanel,
    scaler: &PanelScaler,
    method: Method,
    members: &[usize],
    config: &ExperimentConfig,
    seed_key: &str,
) -> Result<PoolModel> {
    let Method::Neural { cell, mode, .. } = method else {
        return Err(Error::InvalidArgument(format!("{method} is not a neural method")));
    };
    if members.is_empty() {
        return Err(Error::Empty("pool members"));
    }
    let features = input_features(train, config, mode)?;
    let window = config.window;
    let train_cfg = config.training.train_config();
    let net = &config.network;
    let stack_cfg = |input_size| StackConfig {
        kind: cell,
        input_size,
        hidden: net.hidden.clone(),
        head_units: net.head_units,
        head_activation: Activation::Tanh,
        dropout: net.dropout,
    };
    let need = |h: usize| {
        if train.num_weeks() < window + h {
            Err(Error::InvalidArgument(format!("{} training weeks cannot supply window {window} and horizon {h}", train.num_weeks())))
        } else {
            Ok(())
        }
    };
    let nets = match mode {
        FeatureMode::Single => {
            need(1)?;
            let examples = direct_examples(train, scaler, members, &features, window, 1);
            let mut rng = child_rng(config.seed, seed_key);
            let mut m = StackedRecurrentNet::new(&stack_cfg(1), &mut rng)?;
            fit(&mut m, &examples, &train_cfg, &mut rng)?;
            PoolNets::Recursive(m)
        }
        FeatureMode::Multi => {
            let mut out = Vec::new();
            for &h in &config.horizons {
                need(h)?;
                let examples = direct_examples(train, scaler, members, &features, window, h);
                let mut rng = child_rng(config.seed, &format!("{seed_key}/h{h}"));
                let mut m = StackedRecurrentNet::new(&stack_cfg(features.len()), &mut rng)?;
                fit(&mut m, &examples, &train_cfg, &mut rng)?;
                out.push((h, m));
            }
            PoolNets::Stacked(out)
        }
        FeatureMode::Attention => {
            let target = features
                .iter()
                .position(|&f| f == scaler.target_feature)
                .ok_or_else(|| Error::InvalidArgument("feature list must include CF".into()))?;
            let ms = MultiSourceConfig {
                kind: cell,
                features: features.len(),
                target,
                hidden: net.hidden.clone(),
                attention_units: net.attention_units,
                dropout: net.dropout,
            };
            let mut out = Vec::new();
            for &h in &config.horizons {
                need(h)?;
                let examples = direct_examples(train, scaler, members, &features, window, h);
                let mut rng = child_rng(config.seed, &format!("{seed_key}/h{h}"));
                let mut m = MultiSourceNet::new(&ms, h, &mut rng)?;
                fit(&mut m, &examples, &train_cfg, &mut rng)?;
                out.push((h, m));
            }
            PoolNets::Attention(out)
        }
    };
    Ok(PoolModel { method: method.to_string(), features, window, nets })
}

impl PoolModel {
    /// MC-dropout forecasts in counts for the window ending at week `end`,
    /// one per entry of `horizons`.
    #[allow(clippy::too_many_arguments)]
    pub fn forecast(
        &self,
        panel: &WeeklyPanel,
        scaler: &PanelScaler,
        region: usize,
        end: usize,
        horizons: &[usize],
        samples: usize,
        rng: &mut Rng,
    ) -> Result<Vec<McForecast>> {
        if end + 1 < self.window || end >= panel.num_weeks() {
            return Err(Error::InvalidArgument(format!("no full window ends at week {end}")));
        }
        let w: Matrix = scaler.window(panel, region, end, &self.features, self.window);
        let unscale = |mc: McForecast| mc.map(|v| scaler.unscale_target(region, v));
        match &self.nets {
            PoolNets::Recursive(net) => {
                let max_h = horizons.iter().copied().max().ok_or(Error::Empty("horizons"))?;
                let all = mc_recursive_forecast(net, &w, max_h, samples, rng)?;
                Ok(horizons.iter().map(|&h| unscale(all[h - 1].clone())).collect())
            }
            PoolNets::Stacked(nets) => horizons
                .iter()
                .map(|&h| {
                    let net = find(nets, h)?;
                    let s = (0..samples).map(|_| net.forward_sampled(&w, rng)).collect::<Result<Vec<_>>>()?;
                    Ok(unscale(McForecast::from_samples(s)))
                })
                .collect(),
            PoolNets::Attention(nets) => horizons
                .iter()
                .map(|&h| {
                    let net = find(nets, h)?;
                    let s = (0..samples).map(|_| net.forward_sampled(&w, rng)).collect::<Result<Vec<_>>>()?;
                    Ok(unscale(McForecast::from_samples(s)))
                })
                .collect(),
        }
    }

    pub fn net_count(&self) -> usize {
        match &self.nets {
            PoolNets::Recursive(_) => 1,
            PoolNets::Stacked(n) => n.len(),
            PoolNets::Attention(n) => n.len(),
        }
    }
}

fn find<T>(nets: &[(usize, T)], h: usize) -> Result<&T> {
    if h == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    nets.iter()
        .find(|(k, _)| *k == h)
        .map(|(_, n)| n)
        .ok_or_else(|| Error::InvalidArgument(format!("no net trained for horizon {h}")))
}
