use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

/// One rolling origin: train on weeks `0..=train_end`, forecast the next
/// horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    /// First forecast week; names the origin.
    pub origin: NaiveDate,
    /// Index of the last training week in the panel.
    pub train_end: usize,
    /// Target week for each configured horizon.
    pub forecast_weeks: Vec<NaiveDate>,
}

/// Weekly origins from the config's first to last forecast week over a panel
/// whose weeks are `weeks`. Training always starts at the panel's first week.
pub fn rolling_origin(config: &ExperimentConfig, weeks: &[NaiveDate]) -> Result<Vec<ScheduleEntry>> {
    let first = *weeks.first().ok_or(Error::Empty("panel weeks"))?;
    let mut out = Vec::new();
    let mut origin = config.first_forecast_week;
    while origin <= config.last_forecast_week {
        let last_train = origin - Duration::days(7);
        let train_end = weeks.iter().position(|w| *w == last_train).ok_or_else(|| {
            Error::Config(format!("origin {origin}: training week {last_train} is outside the panel"))
        })?;
        if train_end + 1 < config.window {
            return Err(Error::Config(format!("origin {origin}: fewer than {} training weeks since {first}", config.window)));
        }
        out.push(ScheduleEntry {
            origin,
            train_end,
            forecast_weeks: config.horizons.iter().map(|&h| last_train + Duration::days(7 * h as i64)).collect(),
        });
        origin += Duration::days(7);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Resolution;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn weekly(from: &str, n: usize) -> Vec<NaiveDate> {
        (0..n).map(|i| date(from) + Duration::days(7 * i as i64)).collect()
    }

    #[test]
    fn published_protocol() {
        let c = ExperimentConfig::new(Resolution::UsState, date("2020-05-23"), date("2020-08-22"));
        let s = rolling_origin(&c, &weekly("2020-01-25", 40)).unwrap();
        assert_eq!(s.len(), 14);
        assert!(s.iter().all(|e| e.forecast_weeks.len() == 4));
        assert_eq!(
            s[0].forecast_weeks,
            vec![date("2020-05-23"), date("2020-05-30"), date("2020-06-06"), date("2020-06-13")]
        );
        assert_eq!(weekly("2020-01-25", 40)[s[0].train_end], date("2020-05-16"));
        assert!(s.windows(2).all(|w| w[1].train_end == w[0].train_end + 1));
    }

    #[test]
    fn single_origin_and_bounds() {
        let weeks = weekly("2020-03-07", 25);
        let c = ExperimentConfig::new(Resolution::Global, weeks[19], weeks[19]);
        let s = rolling_origin(&c, &weeks).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].train_end, 18);
        let early = ExperimentConfig::new(Resolution::Global, weeks[0], weeks[0]);
        assert!(rolling_origin(&early, &weeks).is_err());
        let late = ExperimentConfig::new(Resolution::Global, weeks[24] + Duration::days(14), weeks[24] + Duration::days(14));
        assert!(rolling_origin(&late, &weeks).is_err());
    }
}
