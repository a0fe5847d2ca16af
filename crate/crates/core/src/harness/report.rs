use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::config::ExperimentConfig;
use super::methods::CategoryMap;
use super::run::{Failure, Forecast, RunOutput};
use crate::baselines::write_calibration_csv;
use crate::clustering::write_assignment_csv;
use crate::error::{Error, Result};
use crate::metrics::{frqbp, rmse, write_frqbp_csv, write_metrics_csv, MetricReport, RegionScore};
use crate::panel::{WeeklyPanel, CF};

type Pairs = (Vec<f64>, Vec<f64>);

/// Truth for a forecast, if its target week lies inside the panel.
fn truth(panel: &WeeklyPanel, cf: usize, f: &Forecast) -> Option<f64> {
    let r = panel.region_index(&f.region)?;
    let t = panel.week_index(f.target_week)?;
    Some(panel.value(r, t, cf))
}

/// Pooled metrics per method and horizon over every scored (region, origin).
/// Methods appear in `method_order`.
pub fn score_methods(panel: &WeeklyPanel, resolution: &str, forecasts: &[Forecast], method_order: &[String]) -> Result<Vec<MetricReport>> {
    let cf = panel.feature_index(CF)?;
    let mut pairs: BTreeMap<(usize, usize), Pairs> = BTreeMap::new();
    for f in forecasts {
        let Some(rank) = method_order.iter().position(|m| *m == f.method) else { continue };
        if let Some(z) = truth(panel, cf, f) {
            let e = pairs.entry((rank, f.horizon)).or_default();
            e.0.push(z);
            e.1.push(f.point);
        }
    }
    pairs
        .into_iter()
        .map(|((rank, h), (z, p))| MetricReport::score(resolution, &method_order[rank], h, &z, &p))
        .collect()
}

/// RMSE of each method on each region and horizon, over origins.
pub fn region_scores(panel: &WeeklyPanel, forecasts: &[Forecast]) -> Result<Vec<RegionScore>> {
    let cf = panel.feature_index(CF)?;
    let mut pairs: BTreeMap<(&str, &str, usize), Pairs> = BTreeMap::new();
    for f in forecasts {
        if let Some(z) = truth(panel, cf, f) {
            let e = pairs.entry((f.region.as_str(), f.method.as_str(), f.horizon)).or_default();
            e.0.push(z);
            e.1.push(f.point);
        }
    }
    pairs
        .into_iter()
        .map(|((region, method, horizon), (z, p))| {
            Ok(RegionScore { region: region.to_string(), horizon, method: method.to_string(), rmse: rmse(&z, &p)? })
        })
        .collect()
}

/// Unweighted mean of member metrics per category and horizon. Members
/// without reports are skipped; a category with no reporting member is an
/// error. PCORR is undefined if any member's is.
pub fn aggregate_by_category(reports: &[MetricReport], categories: &CategoryMap) -> Result<Vec<MetricReport>> {
    let mut out = Vec::new();
    for (cat, members) in &categories.0 {
        let mine: Vec<&MetricReport> = reports.iter().filter(|r| members.contains(&r.method)).collect();
        if mine.is_empty() {
            return Err(Error::InvalidArgument(format!("category {cat} has no reported member")));
        }
        let mut by_key: BTreeMap<(&str, usize), Vec<&MetricReport>> = BTreeMap::new();
        for r in mine {
            by_key.entry((r.resolution.as_str(), r.horizon)).or_default().push(r);
        }
        for ((resolution, horizon), rs) in by_key {
            let k = rs.len() as f64;
            let pcorr = rs.iter().map(|r| r.pcorr).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / k);
            out.push(MetricReport {
                resolution: resolution.to_string(),
                method: cat.clone(),
                horizon,
                rmse: rs.iter().map(|r| r.rmse).sum::<f64>() / k,
                mape: rs.iter().map(|r| r.mape).sum::<f64>() / k,
                pcorr,
                n: rs.iter().map(|r| r.n).sum(),
            });
        }
    }
    Ok(out)
}

pub fn write_forecasts_csv<W: Write>(out: W, forecasts: &[Forecast]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "region", "origin", "horizon", "target_week", "point", "samples"])?;
    for f in forecasts {
        let samples = f.samples.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(";");
        w.write_record([
            f.method.as_str(),
            &f.region,
            &f.origin.to_string(),
            &f.horizon.to_string(),
            &f.target_week.to_string(),
            &f.point.to_string(),
            &samples,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_forecasts_csv<R: Read>(input: R) -> Result<Vec<Forecast>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |m: &str| Error::Schema { line, message: m.to_string() };
        if rec.len() != 7 {
            return Err(bad("expected 7 columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let samples = if rec[6].is_empty() { Vec::new() } else { rec[6].split(';').map(num).collect::<Result<_>>()? };
        out.push(Forecast {
            method: rec[0].to_string(),
            region: rec[1].to_string(),
            origin: rec[2].parse().map_err(|_| bad("bad origin date"))?,
            horizon: rec[3].parse().map_err(|_| bad("bad horizon"))?,
            target_week: rec[4].parse().map_err(|_| bad("bad target week"))?,
            point: num(&rec[5])?,
            samples,
        });
    }
    Ok(out)
}

pub fn write_failures_csv<W: Write>(out: W, failures: &[Failure]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "region", "origin", "horizon", "reason"])?;
    for f in failures {
        w.write_record([f.method.as_str(), &f.region, &f.origin.to_string(), &f.horizon.to_string(), &f.reason])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-region plot data `region,week,truth,method,point`: the observed
/// curve, then every method's one-week-ahead forecasts.
pub fn write_plot_csv<W: Write>(out: W, panel: &WeeklyPanel, region: usize, forecasts: &[Forecast]) -> Result<()> {
    let cf = panel.feature_index(CF)?;
    let code = &panel.regions()[region].code;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["region", "week", "truth", "method", "point"])?;
    for (t, week) in panel.weeks().iter().enumerate() {
        let v = panel.value(region, t, cf).to_string();
        w.write_record([code.as_str(), &week.to_string(), &v, "observed", &v])?;
    }
    for f in forecasts.iter().filter(|f| &f.region == code && f.horizon == 1) {
        let z = truth(panel, cf, f).map(|v| v.to_string()).unwrap_or_default();
        w.write_record([code.as_str(), &f.target_week.to_string(), &z, &f.method, &f.point.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes metrics, FRQBP counts and category means for `forecasts`.
pub fn write_evaluation(dir: &Path, config: &ExperimentConfig, panel: &WeeklyPanel, forecasts: &[Forecast]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let resolution = config.resolution.name();
    let order: Vec<String> = config.methods().iter().map(|m| m.to_string()).collect();
    let reports = score_methods(panel, resolution, forecasts, &order)?;
    write_metrics_csv(create(&dir.join("metrics.csv"))?, &reports)?;

    let scores: Vec<RegionScore> =
        region_scores(panel, forecasts)?.into_iter().filter(|s| order.contains(&s.method)).collect();
    write_frqbp_csv(create(&dir.join("frqbp.csv"))?, resolution, &frqbp(&scores, &order))?;

    let reported: Vec<&str> = reports.iter().map(|r| r.method.as_str()).collect();
    let present = CategoryMap(
        CategoryMap::default()
            .0
            .into_iter()
            .filter(|(_, m)| m.iter().any(|x| reported.contains(&x.as_str())))
            .collect(),
    );
    write_metrics_csv(create(&dir.join("categories.csv"))?, &aggregate_by_category(&reports, &present)?)?;
    Ok(())
}

/// Writes every report file of a finished run into `dir`.
pub fn write_reports(dir: &Path, config: &ExperimentConfig, panel: &WeeklyPanel, output: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_forecasts_csv(create(&dir.join("forecasts.csv"))?, &output.forecasts)?;
    write_failures_csv(create(&dir.join("failures.csv"))?, &output.failures)?;
    write_evaluation(dir, config, panel, &output.forecasts)?;

    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    for (r, region) in panel.regions().iter().enumerate() {
        write_plot_csv(create(&plots.join(format!("{}.csv", region.code)))?, panel, r, &output.forecasts)?;
    }
    if !output.clusters.iter().all(|c| c.assignments.is_empty()) {
        let cdir = dir.join("clusters");
        fs::create_dir_all(&cdir)?;
        for c in &output.clusters {
            for a in &c.assignments {
                write_assignment_csv(create(&cdir.join(format!("{}-{}.csv", c.origin, a.method)))?, panel.regions(), a)?;
            }
        }
    }
    if !output.seir.is_empty() {
        let sdir = dir.join("seir");
        fs::create_dir_all(&sdir)?;
        for (origin, cals) in &output.seir {
            write_calibration_csv(create(&sdir.join(format!("{origin}.csv")))?, cals)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::run_framework;
    use crate::harness::run::tests::{tiny_config, tiny_panel};

    fn report(method: &str, h: usize, rmse: f64, pcorr: Option<f64>) -> MetricReport {
        MetricReport { resolution: "global".into(), method: method.into(), horizon: h, rmse, mape: rmse / 10.0, pcorr, n: 3 }
    }

    fn cats(list: &[(&str, &[&str])]) -> CategoryMap {
        CategoryMap(list.iter().map(|(c, m)| (c.to_string(), m.iter().map(|x| x.to_string()).collect())).collect())
    }

    #[test]
    fn category_means() {
        let reports = vec![report("AR", 1, 10.0, Some(0.5)), report("GAR", 1, 20.0, None), report("Naive", 1, 7.0, Some(0.1))];
        let map = cats(&[("ARs", &["AR", "GAR"]), ("Naive", &["Naive"]), ("Both", &["AR", "Naive"])]);
        let agg = aggregate_by_category(&reports, &map).unwrap();
        assert_eq!(agg[0].rmse, 15.0);
        assert_eq!(agg[0].pcorr, None);
        assert_eq!(agg[0].n, 6);
        assert_eq!((agg[1].rmse, agg[1].mape, agg[1].pcorr), (7.0, 0.7, Some(0.1)));
        assert_eq!(agg[2].rmse, 8.5);
        assert!(aggregate_by_category(&reports, &cats(&[("Empty", &["VAR"])])).is_err());
    }

    #[test]
    fn frqbp_partitions_regions_and_horizons() {
        let panel = tiny_panel(4, 2);
        let c = tiny_config(&panel, 2, &["Naive", "AR", "GAR"]);
        let out = run_framework(&c, &panel).unwrap();
        let order: Vec<String> = c.methods().iter().map(|m| m.to_string()).collect();
        let counts = frqbp(&region_scores(&panel, &out.forecasts).unwrap(), &order);
        assert_eq!(counts.iter().map(|(_, n)| n).sum::<usize>(), 4 * 4);
    }

    #[test]
    fn writes_all_report_files() {
        let panel = tiny_panel(4, 2);
        let c = tiny_config(&panel, 1, &["RNN", "RNN-geo", "Naive", "SEIR", "ENS"]);
        let out = run_framework(&c, &panel).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_reports(dir.path(), &c, &panel, &out).unwrap();
        for f in ["forecasts.csv", "metrics.csv", "frqbp.csv", "categories.csv", "failures.csv"] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        assert_eq!(fs::read_dir(dir.path().join("plots")).unwrap().count(), 4);
        assert!(dir.path().join("seir").is_dir());
        assert!(dir.path().join("clusters").is_dir());
        let back = read_forecasts_csv(File::open(dir.path().join("forecasts.csv")).unwrap()).unwrap();
        assert_eq!(back, out.forecasts);
        let cats = fs::read_to_string(dir.path().join("categories.csv")).unwrap();
        assert!(cats.contains("Clusters") && cats.contains("SEIRs") && !cats.contains("LSTMs"));
    }
}
