use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::methods::{canonical_methods, Method, MethodName};
use crate::baselines::SeirParams;
use crate::clustering::ClusterMethod;
use crate::ensemble::StackingConfig;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, TrainConfig};
use crate::panel::{CCGR, CF, DCGR, DT, TPR, TR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resolution {
    Global,
    UsState,
    UsCounty,
}

impl Resolution {
    pub fn name(self) -> &'static str {
        match self {
            Resolution::Global => "global",
            Resolution::UsState => "us-state",
            Resolution::UsCounty => "us-county",
        }
    }

    /// Testing features exist only for US states.
    pub fn default_features(self) -> Vec<String> {
        let base = [CF, DT, CCGR, DCGR];
        let mut f: Vec<String> = base.iter().map(|s| s.to_string()).collect();
        if self == Resolution::UsState {
            f.extend([TR.to_string(), TPR.to_string()]);
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSettings {
    pub hidden: Vec<usize>,
    pub head_units: usize,
    pub attention_units: usize,
    pub dropout: f64,
}

impl Default for NetworkSettings {
    fn default() -> Self {
        NetworkSettings { hidden: vec![32, 32], head_units: 16, attention_units: 16, dropout: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSettings {
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub learning_rate: f64,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingSettings {
            batch_size: t.batch_size,
            epochs: t.epochs,
            patience: t.patience,
            validation_fraction: t.validation_fraction,
            learning_rate: t.adam.learning_rate,
        }
    }
}

impl TrainingSettings {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            patience: self.patience,
            validation_fraction: self.validation_fraction,
            adam: AdamConfig { learning_rate: self.learning_rate, ..AdamConfig::default() },
        }
    }

    fn from_train_config(t: &TrainConfig) -> Self {
        TrainingSettings {
            batch_size: t.batch_size,
            epochs: t.epochs,
            patience: t.patience,
            validation_fraction: t.validation_fraction,
            learning_rate: t.adam.learning_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StackingSettings {
    pub hidden_units: usize,
    #[serde(flatten)]
    pub training: TrainingSettings,
}

impl Default for StackingSettings {
    fn default() -> Self {
        let s = StackingConfig::default();
        StackingSettings { hidden_units: s.hidden_units, training: TrainingSettings::from_train_config(&s.train) }
    }
}

impl StackingSettings {
    pub fn config(&self) -> StackingConfig {
        StackingConfig { hidden_units: self.hidden_units, train: self.training.train_config() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSettings {
    pub ar_order: usize,
    pub ma_order: usize,
    pub incubation_days: f64,
    pub infectious_days: f64,
    pub ascertainment: f64,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        let s = SeirParams::default();
        BaselineSettings {
            ar_order: 3,
            ma_order: 2,
            incubation_days: s.incubation_days,
            infectious_days: s.infectious_days,
            ascertainment: s.ascertainment,
        }
    }
}

impl BaselineSettings {
    pub fn seir_params(&self) -> SeirParams {
        SeirParams {
            incubation_days: self.incubation_days,
            infectious_days: self.infectious_days,
            ascertainment: self.ascertainment,
            ..SeirParams::default()
        }
    }
}

/// Everything a run needs besides the panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub resolution: Resolution,
    /// Directory with `panel.csv` and `regions.csv`, relative to the config file.
    #[serde(default)]
    pub panel: Option<PathBuf>,
    #[serde(default)]
    pub features: Option<Vec<String>>,
    #[serde(default)]
    pub methods: Option<Vec<MethodName>>,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    /// First target week of the first and last rolling origins.
    pub first_forecast_week: NaiveDate,
    pub last_forecast_week: NaiveDate,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_k")]
    pub k_clusters: usize,
    #[serde(default = "default_max_iter")]
    pub cluster_max_iter: usize,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default)]
    pub network: NetworkSettings,
    #[serde(default)]
    pub training: TrainingSettings,
    #[serde(default)]
    pub stacking: StackingSettings,
    #[serde(default)]
    pub baselines: BaselineSettings,
}

fn default_window() -> usize {
    3
}
fn default_horizons() -> Vec<usize> {
    vec![1, 2, 3, 4]
}
fn default_k() -> usize {
    50
}
fn default_max_iter() -> usize {
    100
}
fn default_mc() -> usize {
    50
}

impl ExperimentConfig {
    pub fn new(resolution: Resolution, first_forecast_week: NaiveDate, last_forecast_week: NaiveDate) -> Self {
        ExperimentConfig {
            resolution,
            panel: None,
            features: None,
            methods: None,
            window: default_window(),
            horizons: default_horizons(),
            first_forecast_week,
            last_forecast_week,
            seed: 0,
            k_clusters: default_k(),
            cluster_max_iter: default_max_iter(),
            mc_samples: default_mc(),
            network: NetworkSettings::default(),
            training: TrainingSettings::default(),
            stacking: StackingSettings::default(),
            baselines: BaselineSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config file; a relative `panel` path is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut c = Self::from_toml(&text)?;
        if let (Some(p), Some(dir)) = (&c.panel, path.parent()) {
            if p.is_relative() {
                c.panel = Some(dir.join(p));
            }
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn features(&self) -> Vec<String> {
        self.features.clone().unwrap_or_else(|| self.resolution.default_features())
    }

    /// Configured methods in canonical order, without duplicates.
    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = match &self.methods {
            Some(list) => list.iter().map(|n| n.0).collect(),
            None => canonical_methods(),
        };
        let mut seen = Vec::new();
        m.retain(|x| {
            let fresh = !seen.contains(x);
            seen.push(*x);
            fresh
        });
        m.sort_by_key(|x| (x.canonical_rank(), x.to_string()));
        m
    }

    pub fn set_methods(&mut self, methods: Vec<Method>) {
        self.methods = Some(methods.into_iter().map(MethodName).collect());
    }

    /// Clustering methods needed by the neural methods, in fixed order.
    pub fn clusterings(&self) -> Vec<ClusterMethod> {
        let used: Vec<ClusterMethod> = self.methods().iter().filter_map(Method::pooling).collect();
        ClusterMethod::ALL.into_iter().filter(|c| used.contains(c)).collect()
    }

    pub fn max_horizon(&self) -> usize {
        self.horizons.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let features = self.features();
        let expected = self.resolution.default_features().len();
        if features.len() != expected {
            return Err(Error::Config(format!(
                "{} resolution uses {expected} features, config lists {}",
                self.resolution.name(),
                features.len()
            )));
        }
        if !features.iter().any(|f| f == CF) {
            return Err(Error::Config("feature list must include CF".into()));
        }
        if self.resolution != Resolution::UsState && features.iter().any(|f| f == TR || f == TPR) {
            return Err(Error::Config("testing features are only available at us-state resolution".into()));
        }
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::Config("horizons must be positive".into()));
        }
        let mut h = self.horizons.clone();
        h.sort_unstable();
        h.dedup();
        if h != self.horizons {
            return Err(Error::Config("horizons must be strictly increasing".into()));
        }
        if self.last_forecast_week < self.first_forecast_week {
            return Err(Error::Config("last forecast week precedes the first".into()));
        }
        if (self.last_forecast_week - self.first_forecast_week).num_days() % 7 != 0 {
            return Err(Error::Config("forecast weeks must be whole weeks apart".into()));
        }
        if self.mc_samples == 0 || self.k_clusters == 0 {
            return Err(Error::Config("mc_samples and k_clusters must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.network.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if self.methods().is_empty() {
            return Err(Error::Config("no methods configured".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
resolution = "us-state"
first_forecast_week = "2020-05-23"
last_forecast_week = "2020-08-22"
"#;

    #[test]
    fn defaults_follow_the_published_settings() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.window, 3);
        assert_eq!(c.horizons, vec![1, 2, 3, 4]);
        assert_eq!(c.k_clusters, 50);
        assert_eq!(c.mc_samples, 50);
        assert_eq!(c.features().len(), 6);
        assert_eq!(c.network.hidden, vec![32, 32]);
        assert_eq!(c.training.batch_size, 32);
        assert_eq!(c.training.epochs, 500);
        assert_eq!(c.stacking.training.batch_size, 8);
        assert_eq!(c.stacking.training.epochs, 200);
        assert_eq!(c.methods().len(), 20);
        assert_eq!(c.clusterings().len(), 5);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        c.set_methods(vec!["GRU-att".parse().unwrap(), "Naive".parse().unwrap()]);
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.methods().iter().map(|m| m.to_string()).collect::<Vec<_>>(), vec!["GRU-att", "Naive"]);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("us-state", "planet")).is_err());
        let global = MINIMAL.replace("us-state", "global");
        assert_eq!(ExperimentConfig::from_toml(&global).unwrap().features().len(), 4);
        assert!(ExperimentConfig::from_toml(&format!("{global}features = [\"CF\",\"DT\",\"TR\",\"TPR\"]\n")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}methods = [\"CNN\"]\n")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}horizons = [2, 1]\n")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}bogus = 1\n")).is_err());
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("2020-08-22", "2020-08-20")).is_err());
    }
}
