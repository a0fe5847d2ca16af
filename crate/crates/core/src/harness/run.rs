use std::collections::BTreeMap;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::methods::{Baseline, Method};
use super::pool::{pool_seed_key, train_pool, PoolModel};
use super::schedule::{rolling_origin, ScheduleEntry};
use crate::baselines::{
    ar_fit, ar_fit_pooled, ar_forecast, arma_fit, naive_forecast, seir_calibrate, seir_forecast, var_fit, var_forecast,
    SeirCalibration, PER_100K,
};
use crate::clustering::{cluster_panel, ClusterAssignment};
use crate::ensemble::{collect_base_predictions, StackingModel};
use crate::error::{Error, Result};
use crate::panel::{PanelScaler, WeeklyPanel, CF};
use crate::recurrent::McForecast;
use crate::rng::{child_rng, derive_seed};

/// One forecast value. `samples` is empty for point-only methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub method: String,
    pub region: String,
    pub origin: NaiveDate,
    pub horizon: usize,
    pub target_week: NaiveDate,
    pub point: f64,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub method: String,
    pub region: String,
    pub origin: NaiveDate,
    pub horizon: usize,
    pub reason: String,
}

/// One pool trained for one neural method at one origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub method: String,
    pub origin: NaiveDate,
    pub members: Vec<String>,
    pub nets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginClusters {
    pub origin: NaiveDate,
    pub assignments: Vec<ClusterAssignment>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub schedule: Vec<ScheduleEntry>,
    pub forecasts: Vec<Forecast>,
    pub failures: Vec<Failure>,
    pub trainings: Vec<TrainingRecord>,
    pub clusters: Vec<OriginClusters>,
    pub seir: Vec<(NaiveDate, Vec<(String, SeirCalibration)>)>,
}

impl RunOutput {
    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// What a neural pool produced for one member region: forecasts from the
/// origin, plus in-sample predictions of earlier weeks for the stacker.
struct MemberOutput {
    region: usize,
    forecast: Vec<McForecast>,
    /// Per configured horizon: target week → point prediction.
    history: Vec<BTreeMap<usize, f64>>,
}

struct PoolTask {
    origin: usize,
    method: Method,
    members: Vec<usize>,
}

struct PoolResult {
    task: PoolTask,
    outcome: Result<(usize, Vec<MemberOutput>)>,
}

fn per_origin_key(config: &ExperimentConfig, what: &str, origin: NaiveDate) -> u64 {
    derive_seed(config.seed, &format!("{what}/{origin}"))
}

/// Runs every configured method at every rolling origin. Model failures are
/// recorded per (method, region, origin, horizon) and never abort the run.
pub fn run_framework(config: &ExperimentConfig, panel: &WeeklyPanel) -> Result<RunOutput> {
    config.validate()?;
    for f in config.features() {
        panel.feature_index(&f)?;
    }
    let schedule = rolling_origin(config, panel.weeks())?;
    let methods = config.methods();
    let cf = panel.feature_index(CF)?;

    let mut trains = Vec::with_capacity(schedule.len());
    let mut clusters = Vec::with_capacity(schedule.len());
    let mut tasks = Vec::new();
    for (o, entry) in schedule.iter().enumerate() {
        let train = panel.truncate(entry.train_end + 1)?;
        let scaler = PanelScaler::fit(&train)?;
        let mut assignments = Vec::new();
        for pooling in config.clusterings() {
            let seed = per_origin_key(config, &format!("cluster/{pooling}"), entry.origin);
            let a = cluster_panel(&train, pooling, config.k_clusters, config.cluster_max_iter, seed)?;
            for m in methods.iter().filter(|m| m.pooling() == Some(pooling)) {
                for members in a.clusters().into_iter().filter(|c| !c.is_empty()) {
                    tasks.push(PoolTask { origin: o, method: *m, members });
                }
            }
            assignments.push(a);
        }
        clusters.push(OriginClusters { origin: entry.origin, assignments });
        trains.push((train, scaler));
    }

    log::info!("{} origins, {} neural pools", schedule.len(), tasks.len());
    let pools: Vec<PoolResult> = tasks
        .into_par_iter()
        .map(|task| {
            let entry = &schedule[task.origin];
            let (train, scaler) = &trains[task.origin];
            let outcome = run_pool(config, panel, train, scaler, entry, &task);
            PoolResult { task, outcome }
        })
        .collect();

    let mut out = RunOutput { schedule: schedule.clone(), clusters, ..RunOutput::default() };
    // (origin, region, method) → neural output, for the stacker.
    let mut neural: BTreeMap<(usize, usize, usize), MemberOutput> = BTreeMap::new();
    for PoolResult { task, outcome } in pools {
        let entry = &schedule[task.origin];
        let name = task.method.to_string();
        match outcome {
            Ok((nets, members)) => {
                out.trainings.push(TrainingRecord {
                    method: name.clone(),
                    origin: entry.origin,
                    members: task.members.iter().map(|&r| panel.regions()[r].code.clone()).collect(),
                    nets,
                });
                for m in members {
                    for (i, &h) in config.horizons.iter().enumerate() {
                        out.forecasts.push(forecast_row(panel, &name, m.region, entry, i, h, &m.forecast[i]));
                    }
                    let rank = methods.iter().position(|x| *x == task.method).unwrap_or(usize::MAX);
                    neural.insert((task.origin, m.region, rank), m);
                }
            }
            Err(e) => {
                log::warn!("{name} at {} failed for {} regions: {e}", entry.origin, task.members.len());
                for &r in &task.members {
                    push_failures(&mut out.failures, config, &name, &panel.regions()[r].code, entry.origin, &e);
                }
            }
        }
    }

    for (o, entry) in schedule.iter().enumerate() {
        let (train, _) = &trains[o];
        let history: Vec<Vec<f64>> = (0..panel.num_regions()).map(|r| train.series(r, cf)).collect();
        for m in &methods {
            match m {
                Method::Baseline(b) => run_baseline(config, panel, entry, *b, &history, &mut out),
                Method::Ensemble => run_ensemble(config, panel, o, entry, &methods, &neural, &mut out),
                Method::Neural { .. } => {}
            }
        }
    }

    let rank: BTreeMap<String, usize> = methods.iter().enumerate().map(|(i, m)| (m.to_string(), i)).collect();
    let region_rank = |code: &str| panel.region_index(code).unwrap_or(usize::MAX);
    out.forecasts.sort_by(|a, b| {
        (rank[&a.method], region_rank(&a.region), a.origin, a.horizon).cmp(&(rank[&b.method], region_rank(&b.region), b.origin, b.horizon))
    });
    out.failures.sort_by(|a, b| {
        (rank[&a.method], region_rank(&a.region), a.origin, a.horizon).cmp(&(rank[&b.method], region_rank(&b.region), b.origin, b.horizon))
    });
    out.trainings.sort_by(|a, b| (rank[&a.method], a.origin, &a.members).cmp(&(rank[&b.method], b.origin, &b.members)));
    Ok(out)
}

fn forecast_row(
    panel: &WeeklyPanel,
    method: &str,
    region: usize,
    entry: &ScheduleEntry,
    i: usize,
    h: usize,
    mc: &McForecast,
) -> Forecast {
    Forecast {
        method: method.to_string(),
        region: panel.regions()[region].code.clone(),
        origin: entry.origin,
        horizon: h,
        target_week: entry.forecast_weeks[i],
        point: mc.point,
        samples: mc.samples.clone(),
    }
}

fn push_failures(out: &mut Vec<Failure>, config: &ExperimentConfig, method: &str, region: &str, origin: NaiveDate, e: &Error) {
    for &h in &config.horizons {
        out.push(Failure {
            method: method.to_string(),
            region: region.to_string(),
            origin,
            horizon: h,
            reason: e.to_string(),
        });
    }
}

fn run_pool(
    config: &ExperimentConfig,
    panel: &WeeklyPanel,
    train: &WeeklyPanel,
    scaler: &PanelScaler,
    entry: &ScheduleEntry,
    task: &PoolTask,
) -> Result<(usize, Vec<MemberOutput>)> {
    let Method::Neural { cell, mode, .. } = task.method else {
        return Err(Error::InvalidArgument("pool task for a non-neural method".into()));
    };
    let origin = entry.origin.to_string();
    let first = &panel.regions()[task.members[0]].code;
    let key = pool_seed_key(cell, mode, &origin, first);
    let model = train_pool(train, scaler, task.method, &task.members, config, &key)?;
    let wants_history = config.methods().contains(&Method::Ensemble);
    let outputs = task
        .members
        .iter()
        .map(|&r| member_output(config, train, scaler, &model, entry, r, wants_history, &key))
        .collect::<Result<Vec<_>>>()?;
    Ok((model.net_count(), outputs))
}

#[allow(clippy::too_many_arguments)]
fn member_output(
    config: &ExperimentConfig,
    train: &WeeklyPanel,
    scaler: &PanelScaler,
    model: &PoolModel,
    entry: &ScheduleEntry,
    region: usize,
    wants_history: bool,
    key: &str,
) -> Result<MemberOutput> {
    let code = &train.regions()[region].code;
    let mut rng = child_rng(config.seed, &format!("mc/{key}/{code}"));
    let end = entry.train_end;
    let forecast = model.forecast(train, scaler, region, end, &config.horizons, config.mc_samples, &mut rng)?;
    if forecast.iter().flat_map(|f| &f.samples).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("forecast samples"));
    }
    let mut history = vec![BTreeMap::new(); config.horizons.len()];
    if wants_history {
        for start in (config.window - 1)..end {
            let fs = model.forecast(train, scaler, region, start, &config.horizons, config.mc_samples, &mut rng)?;
            for (i, (&h, f)) in config.horizons.iter().zip(fs).enumerate() {
                if start + h <= end && f.point.is_finite() {
                    history[i].insert(start + h, f.point);
                }
            }
        }
    }
    Ok(MemberOutput { region, forecast, history })
}

fn run_baseline(
    config: &ExperimentConfig,
    panel: &WeeklyPanel,
    entry: &ScheduleEntry,
    baseline: Baseline,
    history: &[Vec<f64>],
    out: &mut RunOutput,
) {
    let name = Method::Baseline(baseline).to_string();
    let max_h = config.max_horizon();
    let p = config.baselines.ar_order;
    let emit = |out: &mut RunOutput, r: usize, path: Result<Vec<f64>>| {
        let code = &panel.regions()[r].code;
        match path {
            Ok(path) => {
                for (i, &h) in config.horizons.iter().enumerate() {
                    out.forecasts.push(Forecast {
                        method: name.clone(),
                        region: code.clone(),
                        origin: entry.origin,
                        horizon: h,
                        target_week: entry.forecast_weeks[i],
                        point: path[h - 1],
                        samples: Vec::new(),
                    });
                }
            }
            Err(e) => {
                log::warn!("{name} at {} failed for {code}: {e}", entry.origin);
                push_failures(&mut out.failures, config, &name, code, entry.origin, &e);
            }
        }
    };
    match baseline {
        Baseline::Naive => {
            for (r, s) in history.iter().enumerate() {
                emit(out, r, naive_forecast(s, max_h));
            }
        }
        Baseline::Ar => {
            for (r, s) in history.iter().enumerate() {
                emit(out, r, ar_fit(s, p).and_then(|m| ar_forecast(&m, s, max_h)));
            }
        }
        Baseline::Arma => {
            let q = config.baselines.ma_order;
            for (r, s) in history.iter().enumerate() {
                emit(out, r, arma_fit(s, p, q).and_then(|m| ar_forecast(&m, s, max_h)));
            }
        }
        Baseline::Gar => match ar_fit_pooled(history, p) {
            Ok(m) => {
                for (r, s) in history.iter().enumerate() {
                    emit(out, r, ar_forecast(&m, s, max_h));
                }
            }
            Err(e) => {
                for r in 0..history.len() {
                    emit(out, r, Err(Error::InvalidArgument(e.to_string())));
                }
            }
        },
        Baseline::Var => match var_fit(history, p).and_then(|m| var_forecast(&m, history, max_h)) {
            Ok(paths) => {
                for (r, path) in paths.into_iter().enumerate() {
                    emit(out, r, Ok(path));
                }
            }
            Err(e) => {
                for r in 0..history.len() {
                    emit(out, r, Err(Error::InvalidArgument(e.to_string())));
                }
            }
        },
        Baseline::Seir => {
            let mut cals = Vec::new();
            for (r, s) in history.iter().enumerate() {
                // Without a population the counts are taken as rates per 100k.
                let pop = panel.population(r).filter(|p| *p > 0.0).unwrap_or(PER_100K);
                let factor = PER_100K / pop;
                let rates: Vec<f64> = s.iter().map(|v| v * factor).collect();
                let params = config.baselines.seir_params();
                let res = seir_calibrate(&rates, &params).map(|cal| {
                    let path = seir_forecast(&cal, max_h).into_iter().map(|v| (v / factor).max(0.0)).collect();
                    cals.push((panel.regions()[r].code.clone(), cal));
                    path
                });
                emit(out, r, res);
            }
            out.seir.push((entry.origin, cals));
        }
    }
}

fn run_ensemble(
    config: &ExperimentConfig,
    panel: &WeeklyPanel,
    o: usize,
    entry: &ScheduleEntry,
    methods: &[Method],
    neural: &BTreeMap<(usize, usize, usize), MemberOutput>,
    out: &mut RunOutput,
) {
    let cf = panel.feature_index(CF).expect("checked by run_framework");
    let name = Method::Ensemble.to_string();
    let jobs: Vec<(usize, usize, usize)> = (0..panel.num_regions())
        .flat_map(|r| config.horizons.iter().enumerate().map(move |(i, &h)| (r, i, h)))
        .collect();
    let results: Vec<(usize, usize, usize, Result<f64>)> = jobs
        .into_par_iter()
        .map(|(r, i, h)| {
            let bases: Vec<(String, &MemberOutput)> = methods
                .iter()
                .enumerate()
                .filter(|(_, m)| m.is_neural())
                .filter_map(|(k, m)| neural.get(&(o, r, k)).map(|x| (m.to_string(), x)))
                .collect();
            (r, i, h, stack_one(config, panel, cf, r, i, h, entry, &bases))
        })
        .collect();
    for (r, i, h, res) in results {
        let code = panel.regions()[r].code.clone();
        match res {
            Ok(point) => out.forecasts.push(Forecast {
                method: name.clone(),
                region: code,
                origin: entry.origin,
                horizon: h,
                target_week: entry.forecast_weeks[i],
                point,
                samples: Vec::new(),
            }),
            Err(e) => {
                log::warn!("ENS at {} h{h} failed for {code}: {e}", entry.origin);
                out.failures.push(Failure { method: name.clone(), region: code, origin: entry.origin, horizon: h, reason: e.to_string() });
            }
        }
    }
}

/// Stacker trained on the in-sample base predictions of earlier weeks,
/// applied to the origin's base forecasts.
#[allow(clippy::too_many_arguments)]
fn stack_one(
    config: &ExperimentConfig,
    panel: &WeeklyPanel,
    cf: usize,
    region: usize,
    i: usize,
    h: usize,
    entry: &ScheduleEntry,
    bases: &[(String, &MemberOutput)],
) -> Result<f64> {
    if bases.is_empty() {
        return Err(Error::Empty("base models for the ensemble"));
    }
    let code = &panel.regions()[region].code;
    let models: Vec<(String, BTreeMap<usize, f64>)> = bases.iter().map(|(n, m)| (n.clone(), m.history[i].clone())).collect();
    let targets: BTreeMap<usize, f64> = ((config.window - 1 + h)..=entry.train_end).map(|t| (t, panel.value(region, t, cf))).collect();
    let (matrix, _) = collect_base_predictions(code, h, &models, &targets)?;
    if matrix.len() < 2 {
        return Err(Error::InvalidArgument(format!("ensemble needs at least 2 historical rows, got {}", matrix.len())));
    }
    let row: Vec<f64> = bases.iter().map(|(_, m)| m.forecast[i].point).collect();
    let seed = derive_seed(config.seed, &format!("ENS/{}/{code}/h{h}", entry.origin));
    let model = StackingModel::fit(&matrix.rows, &matrix.targets, &config.stacking.config(), seed)?;
    model.predict(&row)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::harness::config::Resolution;
    use crate::panel::synth::{generate, SynthConfig};

    pub(crate) fn tiny_config(panel: &WeeklyPanel, origins: usize, methods: &[&str]) -> ExperimentConfig {
        let weeks = panel.weeks();
        let last = weeks.len() - 4;
        let mut c = ExperimentConfig::new(Resolution::Global, weeks[last + 1 - origins], weeks[last]);
        c.set_methods(methods.iter().map(|m| m.parse().unwrap()).collect());
        c.network.hidden = vec![4];
        c.network.head_units = 4;
        c.network.attention_units = 4;
        c.training.epochs = 15;
        c.stacking.training.epochs = 20;
        c.mc_samples = 5;
        c.k_clusters = 2;
        c.seed = 11;
        c
    }

    pub(crate) fn tiny_panel(regions: usize, group_size: usize) -> WeeklyPanel {
        generate(&SynthConfig { regions, weeks: 16, group_size, seed: 5, ..SynthConfig::default() }).unwrap()
    }

    #[test]
    fn naive_only_is_persistence() {
        let panel = tiny_panel(4, 2);
        let c = tiny_config(&panel, 2, &["Naive"]);
        let out = run_framework(&c, &panel).unwrap();
        assert_eq!(out.forecasts.len(), 4 * 2 * 4);
        let cf = panel.feature_index(CF).unwrap();
        for f in &out.forecasts {
            let r = panel.region_index(&f.region).unwrap();
            let last = panel.week_index(f.origin).unwrap() - 1;
            assert_eq!(f.point.to_bits(), panel.value(r, last, cf).to_bits());
            assert!(f.samples.is_empty());
        }
    }

    #[test]
    fn vanilla_trains_one_model_per_region() {
        let panel = tiny_panel(3, 3);
        let out = run_framework(&tiny_config(&panel, 1, &["RNN"]), &panel).unwrap();
        assert_eq!(out.trainings.len(), 3);
        assert!(out.trainings.iter().all(|t| t.members.len() == 1 && t.nets == 1));
        assert!(out.forecasts.iter().all(|f| f.samples.len() == 5));
        for f in &out.forecasts {
            let mean = f.samples.iter().sum::<f64>() / f.samples.len() as f64;
            assert_eq!(f.point, mean);
            assert!(f.point >= 0.0);
        }
    }

    #[test]
    fn geo_trains_one_model_per_parent() {
        let panel = tiny_panel(6, 3);
        let out = run_framework(&tiny_config(&panel, 2, &["RNN-geo", "GRU-att-geo"]), &panel).unwrap();
        for m in ["RNN-geo", "GRU-att-geo"] {
            for e in &out.schedule {
                let pools: Vec<_> = out.trainings.iter().filter(|t| t.method == m && t.origin == e.origin).collect();
                assert_eq!(pools.len(), 2, "{m}");
                assert!(pools.iter().all(|t| t.members.len() == 3));
            }
        }
        assert!(out.trainings.iter().filter(|t| t.method == "GRU-att-geo").all(|t| t.nets == 4));
    }

    #[test]
    fn vanilla_equals_singleton_clusters() {
        let panel = tiny_panel(3, 1);
        let out = run_framework(&tiny_config(&panel, 1, &["LSTM-m", "LSTM-m-geo"]), &panel).unwrap();
        let (a, b): (Vec<&Forecast>, Vec<&Forecast>) = out.forecasts.iter().partition(|f| f.method == "LSTM-m");
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((&x.region, x.horizon, &x.samples), (&y.region, y.horizon, &y.samples));
        }
    }

    #[test]
    fn every_tuple_is_forecast_or_failed() {
        let panel = tiny_panel(5, 5);
        let methods = ["GRU", "RNN-kshape", "AR", "ARMA", "VAR", "SEIR", "ENS"];
        let c = tiny_config(&panel, 2, &methods);
        let out = run_framework(&c, &panel).unwrap();
        // Twelve weeks of history are too short for ARMA.
        assert!(out.failures.iter().any(|f| f.method == "ARMA"));
        let mut seen = std::collections::BTreeSet::new();
        for (m, r, o, h) in out
            .forecasts
            .iter()
            .map(|f| (&f.method, &f.region, f.origin, f.horizon))
            .chain(out.failures.iter().map(|f| (&f.method, &f.region, f.origin, f.horizon)))
        {
            assert!(seen.insert((m.clone(), r.clone(), o, h)), "duplicate {m} {r} {o} {h}");
        }
        assert_eq!(seen.len(), methods.len() * 5 * 2 * 4);
        assert!(out.forecasts.iter().filter(|f| f.method == "ENS").all(|f| f.samples.is_empty() && f.point >= 0.0));
        assert_eq!(out.seir.len(), 2);
    }

    #[test]
    fn runs_are_reproducible() {
        let panel = tiny_panel(4, 2);
        let c = tiny_config(&panel, 1, &["RNN", "GRU-m", "LSTM-att", "RNN-kmeans", "GAR", "ENS"]);
        let a = run_framework(&c, &panel).unwrap();
        let b = run_framework(&c, &panel).unwrap();
        assert_eq!(a, b);
        let mut other = c.clone();
        other.seed += 1;
        assert_ne!(run_framework(&other, &panel).unwrap().forecasts, a.forecasts);
    }
}
