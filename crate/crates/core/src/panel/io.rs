//! CSV ingestion (long daily form) and panel dumps (wide weekly form).
//!
//! Long input: `region,parent,date,feature,value` with raw features
//! `confirmed`, `deaths`, `positive`, `negative` (daily counts) and
//! `population` (static; any date).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate, Weekday};

use super::features::{aggregate_daily_to_weekly, derive_cgr, derive_testing_features};
use super::{RegionId, WeeklyPanel, CCGR, CF, DCGR, DT, TPR, TR};
use crate::error::{Error, Result};

const LONG_HEADER: [&str; 5] = ["region", "parent", "date", "feature", "value"];
const RAW_COUNTS: [&str; 4] = ["confirmed", "deaths", "positive", "negative"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepareOptions {
    pub week_end: Weekday,
    /// Fill missing daily cells from the previous day instead of rejecting.
    pub forward_fill: bool,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions {
            week_end: Weekday::Sat,
            forward_fill: false,
        }
    }
}

#[derive(Default)]
struct RawRegion {
    parent: Option<String>,
    population: Option<f64>,
    daily: HashMap<String, BTreeMap<NaiveDate, f64>>,
}

fn schema(line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        line,
        message: message.into(),
    }
}

/// Parse long-form daily records and build a weekly panel with CF, DT,
/// CCGR, DCGR and, when testing data and populations exist, TR and TPR.
pub fn read_long_csv<R: Read>(reader: R, options: PrepareOptions) -> Result<WeeklyPanel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(schema(1, "empty file")),
        Some(h) => h?,
    };
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols != LONG_HEADER {
        return Err(schema(1, format!("expected header `{}`", LONG_HEADER.join(","))));
    }

    let mut regions: BTreeMap<String, RawRegion> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != 5 {
            return Err(schema(line, format!("expected 5 fields, found {}", rec.len())));
        }
        let code = rec[0].trim();
        if code.is_empty() {
            return Err(schema(line, "empty region code"));
        }
        let parent = Some(rec[1].trim()).filter(|p| !p.is_empty()).map(String::from);
        let date: NaiveDate = rec[2]
            .trim()
            .parse()
            .map_err(|_| schema(line, format!("invalid ISO-8601 date `{}`", &rec[2])))?;
        let feature = rec[3].trim();
        let value: f64 = rec[4]
            .trim()
            .parse()
            .map_err(|_| schema(line, format!("invalid value `{}`", &rec[4])))?;
        if !value.is_finite() || value < 0.0 {
            return Err(schema(line, format!("value must be a non-negative number, got {value}")));
        }
        let entry = regions.entry(code.to_string()).or_insert_with(|| {
            order.push(code.to_string());
            RawRegion::default()
        });
        match (&entry.parent, &parent) {
            (None, Some(_)) => entry.parent = parent,
            (Some(a), Some(b)) if a != b => {
                return Err(schema(line, format!("region {code} has conflicting parents {a} and {b}")))
            }
            _ => {}
        }
        if feature == "population" {
            if value <= 0.0 {
                return Err(schema(line, "population must be positive"));
            }
            entry.population = Some(value);
            continue;
        }
        if !RAW_COUNTS.contains(&feature) {
            return Err(schema(line, format!("unknown feature `{feature}`")));
        }
        let series = entry.daily.entry(feature.to_string()).or_default();
        if series.insert(date, value).is_some() {
            return Err(schema(line, format!("duplicate row for {code} {feature} {date}")));
        }
    }
    if regions.is_empty() {
        return Err(schema(2, "no data rows"));
    }

    let present: BTreeSet<&str> = regions
        .values()
        .flat_map(|r| r.daily.keys().map(String::as_str))
        .collect();
    if !present.contains("confirmed") {
        return Err(Error::InvalidArgument("input has no `confirmed` rows".into()));
    }
    let (first, last) = regions
        .values()
        .flat_map(|r| r.daily.values().flat_map(|s| s.keys()))
        .fold((NaiveDate::MAX, NaiveDate::MIN), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
    let span = (last - first).num_days() as usize + 1;
    let dates: Vec<NaiveDate> = (0..span).map(|i| first + Duration::days(i as i64)).collect();

    let mut weekly: Vec<HashMap<&str, Vec<f64>>> = Vec::new();
    let mut weeks: Option<Vec<NaiveDate>> = None;
    for code in &order {
        let raw = &regions[code];
        let mut per_feature = HashMap::new();
        for &feat in RAW_COUNTS.iter().filter(|f| present.contains(*f)) {
            let empty = BTreeMap::new();
            let series = raw.daily.get(feat).unwrap_or(&empty);
            let mut daily = Vec::with_capacity(span);
            let mut prev: Option<f64> = None;
            for d in &dates {
                let v = match (series.get(d), prev) {
                    (Some(v), _) => *v,
                    (None, Some(p)) if options.forward_fill => p,
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "missing {feat} for region {code} on {d}{}",
                            if options.forward_fill { " (nothing to forward-fill from)" } else { "" }
                        )))
                    }
                };
                prev = Some(v);
                daily.push((*d, v));
            }
            let agg = aggregate_daily_to_weekly(&daily, options.week_end)?;
            if agg.is_empty() {
                return Err(Error::InvalidArgument("input spans no complete week".into()));
            }
            if weeks.is_none() {
                weeks = Some(agg.iter().map(|w| w.0).collect());
            }
            per_feature.insert(feat, agg.into_iter().map(|w| w.1).collect::<Vec<f64>>());
        }
        weekly.push(per_feature);
    }
    let weeks = weeks.expect("at least one region");

    let has_deaths = present.contains("deaths");
    let has_tests =
        present.contains("positive") && present.contains("negative") && regions.values().all(|r| r.population.is_some());
    let mut features: Vec<String> = vec![CF.into()];
    if has_deaths {
        features.push(DT.into());
    }
    features.push(CCGR.into());
    if has_deaths {
        features.push(DCGR.into());
    }
    if has_tests {
        features.extend([TR.to_string(), TPR.to_string()]);
    }

    let mut values = Vec::with_capacity(order.len());
    let mut region_ids = Vec::with_capacity(order.len());
    let mut populations = Vec::with_capacity(order.len());
    for (code, wk) in order.iter().zip(&weekly) {
        let raw = &regions[code];
        let cf = &wk["confirmed"];
        let mut cols: Vec<Vec<f64>> = vec![cf.clone()];
        if has_deaths {
            cols.push(wk["deaths"].clone());
        }
        cols.push(growth_with_leading_zero(cf)?);
        if has_deaths {
            cols.push(growth_with_leading_zero(&wk["deaths"])?);
        }
        if has_tests {
            let (tr, tpr) = derive_testing_features(&wk["positive"], &wk["negative"], raw.population.unwrap())?;
            cols.push(tr);
            cols.push(tpr);
        }
        values.push(
            (0..weeks.len())
                .map(|t| cols.iter().map(|c| c[t]).collect())
                .collect(),
        );
        region_ids.push(RegionId::new(code.clone(), raw.parent.clone()));
        populations.push(raw.population);
    }
    WeeklyPanel::new(region_ids, populations, weeks, features, values)
}

/// Growth rate aligned to the count series; the first week has no
/// predecessor and gets 0.
pub fn growth_with_leading_zero(counts: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0];
    if counts.len() >= 2 {
        out.extend(derive_cgr(counts)?);
    }
    Ok(out)
}

pub fn read_long_csv_path(path: &Path, options: PrepareOptions) -> Result<WeeklyPanel> {
    read_long_csv(File::open(path)?, options)
}

/// `region,week_ending,<feature...>`.
pub fn write_wide_csv<W: Write>(panel: &WeeklyPanel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["region".to_string(), "week_ending".to_string()];
    header.extend(panel.features().iter().cloned());
    w.write_record(&header)?;
    for (r, region) in panel.regions().iter().enumerate() {
        for (t, week) in panel.weeks().iter().enumerate() {
            let mut row = vec![region.code.clone(), week.to_string()];
            row.extend((0..panel.features().len()).map(|f| panel.value(r, t, f).to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `region,parent,population` sidecar carrying region metadata.
pub fn write_regions_csv<W: Write>(panel: &WeeklyPanel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["region", "parent", "population"])?;
    for (r, region) in panel.regions().iter().enumerate() {
        w.write_record([
            region.code.clone(),
            region.parent.clone().unwrap_or_default(),
            panel.population(r).map(|p| p.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a wide panel dump, optionally joined with a regions sidecar.
pub fn read_wide_csv<R: Read, S: Read>(panel: R, regions: Option<S>) -> Result<WeeklyPanel> {
    let mut meta: HashMap<String, (Option<String>, Option<f64>)> = HashMap::new();
    if let Some(src) = regions {
        let mut rdr = csv::Reader::from_reader(src);
        let hdr: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        if hdr != ["region", "parent", "population"] {
            return Err(schema(1, "regions file header must be `region,parent,population`"));
        }
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let pop = match rec[2].trim() {
                "" => None,
                s => Some(s.parse::<f64>().map_err(|_| schema(i + 2, format!("invalid population `{s}`")))?),
            };
            let parent = Some(rec[1].trim()).filter(|p| !p.is_empty()).map(String::from);
            meta.insert(rec[0].trim().to_string(), (parent, pop));
        }
    }

    let mut rdr = csv::Reader::from_reader(panel);
    let hdr: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if hdr.len() < 3 || hdr[0] != "region" || hdr[1] != "week_ending" {
        return Err(schema(1, "panel header must be `region,week_ending,<feature...>`"));
    }
    let features: Vec<String> = hdr[2..].to_vec();
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(NaiveDate, Vec<f64>)>> = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != hdr.len() {
            return Err(schema(line, format!("expected {} fields, found {}", hdr.len(), rec.len())));
        }
        let code = rec[0].trim().to_string();
        let week: NaiveDate = rec[1]
            .trim()
            .parse()
            .map_err(|_| schema(line, format!("invalid date `{}`", &rec[1])))?;
        let vals = rec
            .iter()
            .skip(2)
            .map(|s| s.trim().parse::<f64>().map_err(|_| schema(line, format!("invalid value `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        if !rows.contains_key(&code) {
            order.push(code.clone());
        }
        rows.entry(code).or_default().push((week, vals));
    }
    if order.is_empty() {
        return Err(schema(2, "no data rows"));
    }
    let mut weeks: Option<Vec<NaiveDate>> = None;
    let mut values = Vec::new();
    let mut ids = Vec::new();
    let mut pops = Vec::new();
    for code in &order {
        let mut r = rows.remove(code).unwrap();
        r.sort_by_key(|x| x.0);
        let wk: Vec<NaiveDate> = r.iter().map(|x| x.0).collect();
        match &weeks {
            None => weeks = Some(wk),
            Some(w) if *w != wk => {
                return Err(Error::InvalidArgument(format!("region {code} covers different weeks")))
            }
            _ => {}
        }
        values.push(r.into_iter().map(|x| x.1).collect());
        let (parent, pop) = meta.get(code).cloned().unwrap_or((None, None));
        ids.push(RegionId::new(code.clone(), parent));
        pops.push(pop);
    }
    WeeklyPanel::new(ids, pops, weeks.unwrap(), features, values)
}

pub fn read_panel_dir(dir: &Path) -> Result<WeeklyPanel> {
    let regions = dir.join("regions.csv");
    let panel = File::open(dir.join("panel.csv"))?;
    if regions.exists() {
        read_wide_csv(panel, Some(File::open(regions)?))
    } else {
        read_wide_csv(panel, None::<File>)
    }
}

/// Write `panel.csv` and `regions.csv` into `dir`.
pub fn write_panel_dir(panel: &WeeklyPanel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_wide_csv(panel, File::create(dir.join("panel.csv"))?)?;
    write_regions_csv(panel, File::create(dir.join("regions.csv"))?)?;
    Ok(())
}
