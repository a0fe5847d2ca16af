//! Weekly aggregation and engineered features.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sum contiguous daily counts into weeks ending on `week_end`. Partial
/// leading and trailing weeks are dropped. Returns `(week_ending, total)`.
pub fn aggregate_daily_to_weekly(daily: &[(NaiveDate, f64)], week_end: Weekday) -> Result<Vec<(NaiveDate, f64)>> {
    if daily.is_empty() {
        return Err(Error::Empty("daily series"));
    }
    for w in daily.windows(2) {
        if w[1].0 != w[0].0 + Duration::days(1) {
            return Err(Error::InvalidArgument(format!(
                "daily dates not contiguous between {} and {}",
                w[0].0, w[1].0
            )));
        }
    }
    if let Some((d, v)) = daily.iter().find(|(_, v)| *v < 0.0 || !v.is_finite()) {
        return Err(Error::Negative { value: *v, at: d.to_string() });
    }
    // First index whose date is the day after a week end.
    let start = daily
        .iter()
        .position(|(d, _)| d.pred_opt().map(|p| p.weekday()) == Some(week_end))
        .unwrap_or(daily.len());
    Ok(daily[start..]
        .chunks_exact(7)
        .map(|week| (week[6].0, week.iter().map(|(_, v)| v).sum()))
        .collect())
}

/// Log-smoothed growth rate: element t is `ln(n_{t+1}+1) − ln(n_t+1)`.
pub fn derive_cgr(counts: &[f64]) -> Result<Vec<f64>> {
    if counts.len() < 2 {
        return Err(Error::InvalidArgument("growth rate needs at least two weeks".into()));
    }
    if let Some(v) = counts.iter().find(|v| **v < 0.0) {
        return Err(Error::Negative { value: *v, at: "cgr input".into() });
    }
    Ok(counts.windows(2).map(|w| (w[1] + 1.0).ln() - (w[0] + 1.0).ln()).collect())
}

/// Tests per 100k population and test positivity. Weeks without tests have
/// positivity 0.
pub fn derive_testing_features(positive: &[f64], negative: &[f64], population: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(population > 0.0) {
        return Err(Error::InvalidArgument(format!("population must be positive, got {population}")));
    }
    if positive.len() != negative.len() {
        return Err(Error::dim("testing series", positive.len(), negative.len()));
    }
    let mut rate = Vec::with_capacity(positive.len());
    let mut positivity = Vec::with_capacity(positive.len());
    for (&p, &n) in positive.iter().zip(negative) {
        if p < 0.0 || n < 0.0 {
            return Err(Error::Negative { value: p.min(n), at: "testing counts".into() });
        }
        let total = p + n;
        rate.push(total / population * 100_000.0);
        positivity.push(if total > 0.0 { p / total } else { 0.0 });
    }
    Ok((rate, positivity))
}

/// Affine map of a series onto [0, 1]. A constant series maps to zeros.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: f64,
    pub max: f64,
}

impl MinMaxScaler {
    pub fn fit(series: &[f64]) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::Empty("minmax series"));
        }
        let (min, max) = series
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Ok(MinMaxScaler { min, max })
    }

    fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn transform(&self, v: f64) -> f64 {
        let r = self.range();
        if r > 0.0 {
            (v - self.min) / r
        } else {
            0.0
        }
    }

    pub fn inverse(&self, v: f64) -> f64 {
        let r = self.range();
        if r > 0.0 {
            v * r + self.min
        } else {
            self.min
        }
    }
}

/// `(x − min)/(max − min)`; constant input gives all zeros.
pub fn minmax_scale(series: &[f64]) -> Result<Vec<f64>> {
    let s = MinMaxScaler::fit(series)?;
    Ok(series.iter().map(|&v| s.transform(v)).collect())
}
