//! Region × week × feature panels: ingestion, engineered features, scaling
//! and supervised windows.

pub mod features;
pub mod io;
pub mod synth;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

pub use features::{aggregate_daily_to_weekly, derive_cgr, derive_testing_features, minmax_scale, MinMaxScaler};

pub const CF: &str = "CF";
pub const DT: &str = "DT";
pub const CCGR: &str = "CCGR";
pub const DCGR: &str = "DCGR";
pub const TR: &str = "TR";
pub const TPR: &str = "TPR";

/// Non-negative raw count features.
pub const COUNT_FEATURES: [&str; 2] = [CF, DT];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionId {
    pub code: String,
    pub parent: Option<String>,
}

impl RegionId {
    pub fn new(code: impl Into<String>, parent: Option<String>) -> Self {
        RegionId {
            code: code.into(),
            parent,
        }
    }
}

/// Dense region × week × feature values. Weeks are consecutive week-ending
/// dates; every cell is present. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyPanel {
    regions: Vec<RegionId>,
    populations: Vec<Option<f64>>,
    weeks: Vec<NaiveDate>,
    features: Vec<String>,
    /// `[region][week][feature]`, row-major.
    values: Vec<f64>,
}

impl WeeklyPanel {
    /// `values[r][t][f]` given as nested vectors.
    pub fn new(
        regions: Vec<RegionId>,
        populations: Vec<Option<f64>>,
        weeks: Vec<NaiveDate>,
        features: Vec<String>,
        values: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::Empty("panel regions"));
        }
        if weeks.is_empty() {
            return Err(Error::Empty("panel weeks"));
        }
        if features.is_empty() {
            return Err(Error::Empty("panel features"));
        }
        if populations.len() != regions.len() {
            return Err(Error::dim("panel populations", regions.len(), populations.len()));
        }
        let mut seen = std::collections::HashSet::new();
        for r in &regions {
            if r.code.is_empty() {
                return Err(Error::InvalidArgument("empty region code".into()));
            }
            if !seen.insert(&r.code) {
                return Err(Error::InvalidArgument(format!("duplicate region {}", r.code)));
            }
        }
        let mut fseen = std::collections::HashSet::new();
        for f in &features {
            if !fseen.insert(f) {
                return Err(Error::InvalidArgument(format!("duplicate feature {f}")));
            }
        }
        for w in weeks.windows(2) {
            if w[1] != w[0] + Duration::days(7) {
                return Err(Error::InvalidArgument(format!(
                    "weeks must be consecutive 7-day steps ({} → {})",
                    w[0], w[1]
                )));
            }
        }
        if values.len() != regions.len() {
            return Err(Error::dim("panel region rows", regions.len(), values.len()));
        }
        let mut flat = Vec::with_capacity(regions.len() * weeks.len() * features.len());
        for (r, per_week) in values.into_iter().enumerate() {
            if per_week.len() != weeks.len() {
                return Err(Error::dim("panel week rows", weeks.len(), per_week.len()));
            }
            for (t, cells) in per_week.into_iter().enumerate() {
                if cells.len() != features.len() {
                    return Err(Error::dim("panel feature cells", features.len(), cells.len()));
                }
                for (f, &v) in cells.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::NonFinite("panel value"));
                    }
                    if v < 0.0 && COUNT_FEATURES.contains(&features[f].as_str()) {
                        return Err(Error::Negative {
                            value: v,
                            at: format!("{} {} {}", regions[r].code, weeks[t], features[f]),
                        });
                    }
                }
                flat.extend(cells);
            }
        }
        Ok(WeeklyPanel {
            regions,
            populations,
            weeks,
            features,
            values: flat,
        })
    }

    pub fn regions(&self) -> &[RegionId] {
        &self.regions
    }

    pub fn population(&self, region: usize) -> Option<f64> {
        self.populations[region]
    }

    pub fn populations(&self) -> &[Option<f64>] {
        &self.populations
    }

    pub fn weeks(&self) -> &[NaiveDate] {
        &self.weeks
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn num_weeks(&self) -> usize {
        self.weeks.len()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown feature {name}")))
    }

    pub fn region_index(&self, code: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.code == code)
    }

    pub fn week_index(&self, week: NaiveDate) -> Option<usize> {
        self.weeks.iter().position(|w| *w == week)
    }

    pub fn value(&self, region: usize, week: usize, feature: usize) -> f64 {
        let nf = self.features.len();
        self.values[(region * self.weeks.len() + week) * nf + feature]
    }

    /// One feature's full series for one region.
    pub fn series(&self, region: usize, feature: usize) -> Vec<f64> {
        (0..self.weeks.len()).map(|t| self.value(region, t, feature)).collect()
    }

    pub fn series_by_name(&self, region: usize, feature: &str) -> Result<Vec<f64>> {
        Ok(self.series(region, self.feature_index(feature)?))
    }

    /// Restrict to the first `weeks` weeks.
    pub fn truncate(&self, weeks: usize) -> Result<WeeklyPanel> {
        if weeks == 0 || weeks > self.weeks.len() {
            return Err(Error::InvalidArgument(format!("cannot truncate to {weeks} weeks")));
        }
        let values = (0..self.regions.len())
            .map(|r| {
                (0..weeks)
                    .map(|t| (0..self.features.len()).map(|f| self.value(r, t, f)).collect())
                    .collect()
            })
            .collect();
        WeeklyPanel::new(
            self.regions.clone(),
            self.populations.clone(),
            self.weeks[..weeks].to_vec(),
            self.features.clone(),
            values,
        )
    }
}

/// Input window `X_{r,t}` (T×S, oldest row first) and target `CF_{t+h}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub region: RegionId,
    /// Index of the last week inside the window.
    pub origin: usize,
    pub input: Matrix,
    pub target: f64,
    pub horizon: usize,
}

/// Every window of length `window` whose target `horizon` weeks after its
/// last row lies inside the panel. Targets are the CF feature.
pub fn cut_windows(panel: &WeeklyPanel, features: &[&str], window: usize, horizon: usize) -> Result<Vec<WindowSample>> {
    if window == 0 || horizon == 0 {
        return Err(Error::InvalidArgument("window and horizon must be ≥ 1".into()));
    }
    let idx = features
        .iter()
        .map(|f| panel.feature_index(f))
        .collect::<Result<Vec<_>>>()?;
    let cf = panel.feature_index(CF)?;
    let n = panel.num_weeks();
    let mut out = Vec::new();
    if n < window + horizon {
        return Ok(out);
    }
    for (r, region) in panel.regions().iter().enumerate() {
        for origin in (window - 1)..(n - horizon) {
            let input = Matrix::from_fn(window, idx.len(), |i, j| panel.value(r, origin + 1 - window + i, idx[j]));
            out.push(WindowSample {
                region: region.clone(),
                origin,
                input,
                target: panel.value(r, origin + horizon, cf),
                horizon,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn toy_panel(regions: usize, weeks: usize) -> WeeklyPanel {
        let w0: NaiveDate = "2020-03-07".parse().unwrap();
        WeeklyPanel::new(
            (0..regions).map(|r| RegionId::new(format!("R{r}"), Some("P".into()))).collect(),
            vec![Some(1e5); regions],
            (0..weeks).map(|t| w0 + Duration::days(7 * t as i64)).collect(),
            vec![CF.into(), DT.into()],
            (0..regions)
                .map(|r| (0..weeks).map(|t| vec![(r * 100 + t) as f64, t as f64]).collect())
                .collect(),
        )
        .unwrap()
    }

    fn enumerate_count(span: usize, window: usize, horizon: usize) -> usize {
        let mut c = 0;
        for t in 0..span {
            if t + 1 >= window && t + horizon < span {
                c += 1;
            }
        }
        c
    }

    #[test]
    fn window_counts_match_enumeration() {
        let p = toy_panel(1, 25);
        // Origins 2..=23 for h = 1 and 2..=20 for h = 4.
        assert_eq!(cut_windows(&p, &[CF], 3, 1).unwrap().len(), 22);
        assert_eq!(cut_windows(&p, &[CF], 3, 4).unwrap().len(), 19);
        assert_eq!(cut_windows(&toy_panel(1, 4), &[CF], 3, 4).unwrap().len(), 0);
        for span in 1..12 {
            for t in 1..5 {
                for h in 1..5 {
                    let got = cut_windows(&toy_panel(2, span), &[CF], t, h).unwrap().len();
                    assert_eq!(got, 2 * enumerate_count(span, t, h));
                    assert_eq!(got, 2 * (span + 1).saturating_sub(t + h));
                }
            }
        }
    }

    #[test]
    fn window_contents() {
        let p = toy_panel(2, 10);
        let w = cut_windows(&p, &[CF, DT], 3, 2).unwrap();
        let s = &w[0];
        assert_eq!(s.origin, 2);
        assert_eq!(s.input.row(0), &[0.0, 0.0]);
        assert_eq!(s.input.row(2), &[2.0, 2.0]);
        assert_eq!(s.target, 4.0);
        let last = w.last().unwrap();
        assert_eq!(last.region.code, "R1");
        assert_eq!(last.target, 109.0);
        assert!(cut_windows(&p, &["XX"], 3, 1).is_err());
    }

    #[test]
    fn panel_rejects_gaps_and_negatives() {
        let w0: NaiveDate = "2020-03-07".parse().unwrap();
        let r = vec![RegionId::new("A", None)];
        let bad_weeks = WeeklyPanel::new(
            r.clone(),
            vec![None],
            vec![w0, w0 + Duration::days(14)],
            vec![CF.into()],
            vec![vec![vec![1.0], vec![1.0]]],
        );
        assert!(bad_weeks.is_err());
        let neg = WeeklyPanel::new(r, vec![None], vec![w0], vec![CF.into()], vec![vec![vec![-1.0]]]);
        assert!(matches!(neg, Err(Error::Negative { .. })));
    }
}

/// Per-region, per-feature min-max scalers fitted on a (training) panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelScaler {
    /// `scalers[region][feature]`
    pub scalers: Vec<Vec<MinMaxScaler>>,
    pub target_feature: usize,
}

impl PanelScaler {
    pub fn fit(panel: &WeeklyPanel) -> Result<Self> {
        let scalers = (0..panel.num_regions())
            .map(|r| {
                (0..panel.features().len())
                    .map(|f| MinMaxScaler::fit(&panel.series(r, f)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PanelScaler {
            scalers,
            target_feature: panel.feature_index(CF)?,
        })
    }

    /// Scaled T×S window ending at week `origin` (inclusive).
    pub fn window(&self, panel: &WeeklyPanel, region: usize, origin: usize, features: &[usize], len: usize) -> Matrix {
        Matrix::from_fn(len, features.len(), |i, j| {
            let f = features[j];
            self.scalers[region][f].transform(panel.value(region, origin + 1 - len + i, f))
        })
    }

    pub fn scale_target(&self, region: usize, value: f64) -> f64 {
        self.scalers[region][self.target_feature].transform(value)
    }

    /// Back to counts, clamped at zero.
    pub fn unscale_target(&self, region: usize, value: f64) -> f64 {
        self.scalers[region][self.target_feature].inverse(value).max(0.0)
    }
}
