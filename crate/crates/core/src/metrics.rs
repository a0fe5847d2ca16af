//! Point-forecast accuracy measures and best-method counting.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair(truth: &[f64], pred: &[f64]) -> Result<()> {
    if truth.is_empty() {
        return Err(Error::Empty("metric inputs"));
    }
    if truth.len() != pred.len() {
        return Err(Error::dim("metric prediction length", truth.len(), pred.len()));
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    let s: f64 = truth.iter().zip(pred).map(|(z, p)| (z - p) * (z - p)).sum();
    Ok((s / truth.len() as f64).sqrt())
}

/// Mean of `|z − ẑ| / (z + 1)`, in percent. Truth values are counts.
pub fn mape(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    if let Some(z) = truth.iter().find(|z| **z < 0.0) {
        return Err(Error::Negative { value: *z, at: "MAPE truth".into() });
    }
    let s: f64 = truth.iter().zip(pred).map(|(z, p)| (z - p).abs() / (z + 1.0)).sum();
    Ok(s / truth.len() as f64 * 100.0)
}

/// Sample Pearson correlation; undefined when either side is constant.
pub fn pcorr(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    if truth.len() < 2 {
        return Err(Error::Undefined { metric: "PCORR", reason: "fewer than two points" });
    }
    let n = truth.len() as f64;
    let mz = truth.iter().sum::<f64>() / n;
    let mp = pred.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (z, p) in truth.iter().zip(pred) {
        let (a, b) = (z - mz, p - mp);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined { metric: "PCORR", reason: "constant series" });
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub resolution: String,
    pub method: String,
    pub horizon: usize,
    pub rmse: f64,
    pub mape: f64,
    /// `None` when undefined (constant input).
    pub pcorr: Option<f64>,
    pub n: usize,
}

impl MetricReport {
    pub fn score(resolution: &str, method: &str, horizon: usize, truth: &[f64], pred: &[f64]) -> Result<Self> {
        Ok(MetricReport {
            resolution: resolution.to_string(),
            method: method.to_string(),
            horizon,
            rmse: rmse(truth, pred)?,
            mape: mape(truth, pred)?,
            pcorr: match pcorr(truth, pred) {
                Ok(v) => Some(v),
                Err(Error::Undefined { .. }) => None,
                Err(e) => return Err(e),
            },
            n: truth.len(),
        })
    }
}

/// Long-format CSV `resolution,method,horizon,metric,value,n`; an undefined
/// PCORR is written as `undefined`.
pub fn write_metrics_csv<W: Write>(out: W, reports: &[MetricReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["resolution", "method", "horizon", "metric", "value", "n"])?;
    for r in reports {
        let pc = r.pcorr.map_or_else(|| "undefined".to_string(), |v| v.to_string());
        for (metric, value) in [("RMSE", r.rmse.to_string()), ("MAPE", r.mape.to_string()), ("PCORR", pc)] {
            w.write_record([r.resolution.as_str(), &r.method, &r.horizon.to_string(), metric, &value, &r.n.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// RMSE of one method on one region at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionScore {
    pub region: String,
    pub horizon: usize,
    pub method: String,
    pub rmse: f64,
}

/// Best-RMSE counts per method: each (region, horizon) awards one count.
/// Ties go to the method listed first in `method_order`; unlisted methods
/// rank after listed ones, alphabetically. Returned in that same order.
pub fn frqbp(scores: &[RegionScore], method_order: &[String]) -> Vec<(String, usize)> {
    let rank = |m: &str| method_order.iter().position(|o| o == m).unwrap_or(usize::MAX);
    let mut methods: Vec<String> = method_order.to_vec();
    let mut extra: Vec<String> = scores
        .iter()
        .map(|s| s.method.clone())
        .filter(|m| !method_order.contains(m))
        .collect();
    extra.sort();
    extra.dedup();
    methods.extend(extra);

    let mut best: BTreeMap<(&str, usize), &RegionScore> = BTreeMap::new();
    for s in scores {
        let key = (s.region.as_str(), s.horizon);
        match best.get(&key) {
            Some(cur)
                if cur.rmse < s.rmse
                    || (cur.rmse == s.rmse && (rank(&cur.method), &cur.method) <= (rank(&s.method), &s.method)) => {}
            _ => {
                best.insert(key, s);
            }
        }
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in best.values() {
        *counts.entry(s.method.as_str()).or_default() += 1;
    }
    methods.into_iter().map(|m| {
        let c = counts.get(m.as_str()).copied().unwrap_or(0);
        (m, c)
    }).collect()
}

pub fn write_frqbp_csv<W: Write>(out: W, resolution: &str, counts: &[(String, usize)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["resolution", "method", "count"])?;
    for (m, c) in counts {
        w.write_record([resolution, m.as_str(), &c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
