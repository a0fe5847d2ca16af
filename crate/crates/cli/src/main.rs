use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::Duration;
use clap::{Args, Parser, Subcommand};
use epiens::clustering::{cluster_panel, write_assignment_csv, ClusterMethod};
use epiens::harness::report::{read_forecasts_csv, write_forecasts_csv};
use epiens::harness::{
    rolling_origin, run_framework, train_pool, write_evaluation, write_reports, Checkpoint, ExperimentConfig, Forecast,
    Method,
};
use epiens::panel::io::{read_long_csv_path, read_panel_dir, write_panel_dir, PrepareOptions};
use epiens::panel::synth::{generate, Archetype, SynthConfig};
use epiens::panel::{PanelScaler, WeeklyPanel};
use epiens::rng::{child_rng, derive_seed};

/// Weekly epidemic forecasting: data preparation, model training,
/// ensembling and evaluation.
#[derive(Parser)]
#[command(name = "epiens", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated method list, overriding the config.
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Panel directory (panel.csv + regions.csv), overriding the config.
    #[arg(long, global = true)]
    panel: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build a weekly panel from long-form daily CSV.
    Prepare {
        input: PathBuf,
        /// Carry the previous day forward over missing days.
        #[arg(long)]
        ffill: bool,
    },
    /// Generate a seeded synthetic panel.
    Synth {
        #[arg(long, default_value_t = 20)]
        regions: usize,
        #[arg(long, default_value_t = 25)]
        weeks: usize,
        /// Comma-separated archetypes assigned round-robin, e.g. `rising,ar1,flat(3)`.
        #[arg(long, value_delimiter = ',')]
        archetypes: Option<Vec<String>>,
        #[arg(long, default_value_t = 5)]
        group_size: usize,
        /// Add TR and TPR columns.
        #[arg(long)]
        testing: bool,
    },
    /// Cluster regions over the panel up to the last training week.
    Cluster {
        /// Clustering methods; defaults to those the configured methods use.
        #[arg(long, value_delimiter = ',')]
        clustering: Option<Vec<String>>,
    },
    /// Train neural methods at the last origin and save checkpoints.
    Train,
    /// Forecast from saved checkpoints.
    Forecast {
        /// Directory written by `train`.
        #[arg(long)]
        checkpoints: PathBuf,
    },
    /// Score a forecasts.csv against the panel.
    Evaluate {
        #[arg(long)]
        forecasts: PathBuf,
    },
    /// Run every configured method over all origins and write all reports.
    RunAll,
}

/// Bad input or configuration; exits with status 2.
#[derive(Debug)]
struct Usage(anyhow::Error);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(e: impl Into<anyhow::Error>) -> anyhow::Error {
    Usage(e.into()).into()
}

enum Status {
    Ok,
    Partial,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.common.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("EPIENS_THREADS") {
        let n: usize = v.parse().with_context(|| format!("EPIENS_THREADS={v} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Status> {
    let c = &cli.common;
    match &cli.command {
        Command::Prepare { input, ffill } => {
            let out = require_out(c)?;
            let options = PrepareOptions { forward_fill: *ffill, ..PrepareOptions::default() };
            let panel = read_long_csv_path(input, options)
                .map_err(|e| usage(anyhow::Error::from(e).context(format!("reading {}", input.display()))))?;
            write_panel_dir(&panel, out)?;
            println!("{}", summary(&panel));
            Ok(Status::Ok)
        }
        Command::Synth { regions, weeks, archetypes, group_size, testing } => {
            let out = require_out(c)?;
            let mut cfg = SynthConfig {
                regions: *regions,
                weeks: *weeks,
                seed: c.seed.unwrap_or(0),
                group_size: *group_size,
                with_testing: *testing,
                ..SynthConfig::default()
            };
            if let Some(list) = archetypes {
                cfg.archetypes = list.iter().map(|a| a.parse::<Archetype>()).collect::<Result<_, _>>().map_err(usage)?;
            }
            let panel = generate(&cfg).map_err(usage)?;
            write_panel_dir(&panel, out)?;
            if !c.quiet {
                println!("{}", summary(&panel));
            }
            Ok(Status::Ok)
        }
        Command::Cluster { clustering } => {
            let out = require_out(c)?;
            let (config, panel) = load(c)?;
            let methods: Vec<ClusterMethod> = match clustering {
                Some(list) => list.iter().map(|m| m.parse()).collect::<Result<_, _>>().map_err(usage)?,
                None => config.clusterings(),
            };
            let schedule = rolling_origin(&config, panel.weeks()).map_err(usage)?;
            let last = schedule.last().context("empty schedule")?;
            let train = panel.truncate(last.train_end + 1)?;
            fs::create_dir_all(out)?;
            for m in methods {
                let seed = derive_seed(config.seed, &format!("cluster/{m}/{}", last.origin));
                let a = cluster_panel(&train, m, config.k_clusters, config.cluster_max_iter, seed)?;
                write_assignment_csv(BufWriter::new(File::create(out.join(format!("{m}.csv")))?), panel.regions(), &a)?;
                log::info!("{m}: {} clusters", a.partition().len());
            }
            Ok(Status::Ok)
        }
        Command::Train => {
            let out = require_out(c)?;
            let (config, panel) = load(c)?;
            cmd_train(&config, &panel, out)
        }
        Command::Forecast { checkpoints } => {
            let out = require_out(c)?;
            let (config, panel) = load(c)?;
            cmd_forecast(&config, &panel, checkpoints, out)
        }
        Command::Evaluate { forecasts } => {
            let out = require_out(c)?;
            let (config, panel) = load(c)?;
            let f = read_forecasts_csv(File::open(forecasts).with_context(|| format!("opening {}", forecasts.display()))?)
                .map_err(usage)?;
            write_evaluation(out, &config, &panel, &f)?;
            Ok(Status::Ok)
        }
        Command::RunAll => {
            let out = require_out(c)?;
            let (config, panel) = load(c)?;
            let output = run_framework(&config, &panel).map_err(|e| match e {
                epiens::Error::Config(_) => usage(e),
                e => e.into(),
            })?;
            write_reports(out, &config, &panel, &output)?;
            if !c.quiet {
                println!(
                    "{} forecasts, {} failures written to {}",
                    output.forecasts.len(),
                    output.failures.len(),
                    out.display()
                );
            }
            Ok(if output.has_failures() { Status::Partial } else { Status::Ok })
        }
    }
}

fn summary(panel: &WeeklyPanel) -> String {
    format!("{} regions, {} weeks, {} features", panel.num_regions(), panel.num_weeks(), panel.features().len())
}

fn require_out(c: &Common) -> Result<&Path> {
    c.out.as_deref().ok_or_else(|| usage(anyhow::anyhow!("--out is required")))
}

/// Config plus panel, with command-line overrides applied.
fn load(c: &Common) -> Result<(ExperimentConfig, WeeklyPanel)> {
    let path = c.config.as_deref().ok_or_else(|| usage(anyhow::anyhow!("--config is required")))?;
    let mut config = ExperimentConfig::load(path).map_err(|e| usage(anyhow::Error::from(e).context(format!("loading {}", path.display()))))?;
    if let Some(seed) = c.seed {
        config.seed = seed;
    }
    if let Some(list) = &c.methods {
        let methods = list.iter().map(|m| m.parse::<Method>()).collect::<Result<Vec<_>, _>>().map_err(usage)?;
        config.set_methods(methods);
    }
    config.validate().map_err(usage)?;
    let dir = c
        .panel
        .clone()
        .or_else(|| config.panel.clone())
        .ok_or_else(|| usage(anyhow::anyhow!("no panel given (--panel or `panel` in the config)")))?;
    let panel = read_panel_dir(&dir).map_err(|e| usage(anyhow::Error::from(e).context(format!("reading panel {}", dir.display()))))?;
    Ok((config, panel))
}

fn cmd_train(config: &ExperimentConfig, panel: &WeeklyPanel, out: &Path) -> Result<Status> {
    let schedule = rolling_origin(config, panel.weeks()).map_err(usage)?;
    let last = schedule.last().context("empty schedule")?;
    let train = panel.truncate(last.train_end + 1)?;
    let scaler = PanelScaler::fit(&train)?;
    let neural: Vec<Method> = config.methods().into_iter().filter(Method::is_neural).collect();
    if neural.is_empty() {
        bail!(usage(anyhow::anyhow!("train needs at least one neural method")));
    }
    let mut failed = false;
    for method in neural {
        let Method::Neural { cell, mode, pooling } = method else { unreachable!() };
        let seed = derive_seed(config.seed, &format!("cluster/{pooling}/{}", last.origin));
        let a = cluster_panel(&train, pooling, config.k_clusters, config.cluster_max_iter, seed)?;
        let dir = out.join(method.to_string());
        fs::create_dir_all(&dir)?;
        for members in a.clusters().into_iter().filter(|m| !m.is_empty()) {
            let first = &panel.regions()[members[0]].code;
            let key = epiens::harness::pool::pool_seed_key(cell, mode, &last.origin.to_string(), first);
            match train_pool(&train, &scaler, method, &members, config, &key) {
                Ok(model) => {
                    let codes = members.iter().map(|&r| panel.regions()[r].code.clone()).collect();
                    let week = train.weeks()[last.train_end];
                    Checkpoint::new(week, codes, config.seed, scaler.clone(), model).save(&dir.join(format!("{first}.json")))?;
                }
                Err(e) => {
                    log::warn!("{method} failed on pool starting at {first}: {e}");
                    failed = true;
                }
            }
        }
        log::info!("{method}: trained through {}", train.weeks()[last.train_end]);
    }
    Ok(if failed { Status::Partial } else { Status::Ok })
}

fn cmd_forecast(config: &ExperimentConfig, panel: &WeeklyPanel, checkpoints: &Path, out: &Path) -> Result<Status> {
    let mut files = Vec::new();
    for dir in fs::read_dir(checkpoints).with_context(|| format!("reading {}", checkpoints.display()))? {
        let dir = dir?.path();
        if dir.is_dir() {
            for f in fs::read_dir(&dir)? {
                let f = f?.path();
                if f.extension().is_some_and(|e| e == "json") {
                    files.push(f);
                }
            }
        }
    }
    files.sort();
    if files.is_empty() {
        bail!(usage(anyhow::anyhow!("no checkpoints under {}", checkpoints.display())));
    }
    let mut forecasts: Vec<Forecast> = Vec::new();
    for path in files {
        let ck = Checkpoint::load(&path).map_err(|e| usage(anyhow::Error::from(e).context(format!("loading {}", path.display()))))?;
        let end = panel
            .week_index(ck.trained_through)
            .ok_or_else(|| usage(anyhow::anyhow!("{}: week {} is not in the panel", path.display(), ck.trained_through)))?;
        for code in &ck.members {
            let r = panel.region_index(code).ok_or_else(|| usage(anyhow::anyhow!("region {code} is not in the panel")))?;
            let mut rng = child_rng(config.seed, &format!("forecast/{}/{code}", ck.model.method));
            let fs = ck.model.forecast(panel, &ck.scaler, r, end, &config.horizons, config.mc_samples, &mut rng)?;
            for (&h, mc) in config.horizons.iter().zip(fs) {
                forecasts.push(Forecast {
                    method: ck.model.method.clone(),
                    region: code.clone(),
                    origin: ck.trained_through + Duration::days(7),
                    horizon: h,
                    target_week: ck.trained_through + Duration::days(7 * h as i64),
                    point: mc.point,
                    samples: mc.samples,
                });
            }
        }
    }
    fs::create_dir_all(out)?;
    write_forecasts_csv(BufWriter::new(File::create(out.join("forecasts.csv"))?), &forecasts)?;
    Ok(Status::Ok)
}
