//! Seeded synthetic panels built from trend archetypes.

use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::features::derive_testing_features;
use super::io::growth_with_leading_zero;
use super::{RegionId, WeeklyPanel, CCGR, CF, DCGR, DT, TPR, TR};
use crate::error::{Error, Result};
use crate::rng::{child_rng, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Archetype {
    /// Exponential growth with multiplicative noise.
    Rising,
    /// Single wave.
    Peaked,
    /// Periodic oscillation around a level.
    Fluctuating,
    /// Sporadic counts of 0–2.
    NearZero,
    /// Constant value.
    Flat(f64),
    /// Noise-free `x_{t+1} = a·x_t + b`, exactly predictable by AR(1).
    Ar1,
}

impl Archetype {
    pub const DEFAULT_MIX: [Archetype; 4] =
        [Archetype::Rising, Archetype::Peaked, Archetype::Fluctuating, Archetype::NearZero];

    pub fn family(&self) -> &'static str {
        match self {
            Archetype::Rising => "rising",
            Archetype::Peaked => "peaked",
            Archetype::Fluctuating => "fluctuating",
            Archetype::NearZero => "near-zero",
            Archetype::Flat(_) => "flat",
            Archetype::Ar1 => "ar1",
        }
    }

    fn generate(&self, weeks: usize, rng: &mut Rng) -> Vec<f64> {
        let noise = Normal::<f64>::new(0.0, 0.1).unwrap();
        let w = weeks as f64;
        match *self {
            Archetype::Rising => {
                let a = rng.gen_range(20.0..200.0);
                let g = rng.gen_range(0.08..0.2);
                (0..weeks)
                    .map(|t| (a * (g * t as f64).exp() * noise.sample(rng).exp()).round())
                    .collect()
            }
            Archetype::Peaked => {
                let amp = rng.gen_range(200.0..2000.0);
                let centre = rng.gen_range(0.3 * w..0.7 * w);
                let width = rng.gen_range(2.0..5.0);
                (0..weeks)
                    .map(|t| {
                        let z = (t as f64 - centre) / width;
                        (5.0 + amp * (-0.5 * z * z).exp() * noise.sample(rng).exp()).round()
                    })
                    .collect()
            }
            Archetype::Fluctuating => {
                let level = rng.gen_range(100.0..800.0);
                let period = rng.gen_range(4.0..8.0);
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                (0..weeks)
                    .map(|t| {
                        let s = (std::f64::consts::TAU * t as f64 / period + phase).sin();
                        (level * (1.0 + 0.5 * s) * noise.sample(rng).exp()).round()
                    })
                    .collect()
            }
            Archetype::NearZero => (0..weeks).map(|_| rng.gen_range(0..3) as f64).collect(),
            Archetype::Flat(c) => vec![c; weeks],
            Archetype::Ar1 => {
                let a = 0.85;
                let level = rng.gen_range(100.0..1000.0);
                let b = level * (1.0 - a);
                let mut x = rng.gen_range(20.0..1500.0);
                (0..weeks)
                    .map(|_| {
                        let v = x;
                        x = a * x + b;
                        v
                    })
                    .collect()
            }
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Archetype::Flat(c) => write!(f, "flat({c})"),
            other => f.write_str(other.family()),
        }
    }
}

impl FromStr for Archetype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Ok(match s.as_str() {
            "rising" => Archetype::Rising,
            "peaked" => Archetype::Peaked,
            "fluctuating" => Archetype::Fluctuating,
            "near-zero" | "nearzero" => Archetype::NearZero,
            "ar1" => Archetype::Ar1,
            _ => {
                let inner = s
                    .strip_prefix("flat(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown archetype `{s}`")))?;
                let c: f64 = inner
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("invalid flat level `{inner}`")))?;
                if !(c >= 0.0) {
                    return Err(Error::InvalidArgument("flat level must be ≥ 0".into()));
                }
                Archetype::Flat(c)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub regions: usize,
    pub weeks: usize,
    pub seed: u64,
    pub first_week: NaiveDate,
    /// Assigned to regions round-robin.
    pub archetypes: Vec<Archetype>,
    /// Regions per parent code.
    pub group_size: usize,
    pub with_testing: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            regions: 20,
            weeks: 25,
            seed: 0,
            first_week: NaiveDate::from_ymd_opt(2020, 3, 7).unwrap(),
            archetypes: Archetype::DEFAULT_MIX.to_vec(),
            group_size: 5,
            with_testing: false,
        }
    }
}

/// The archetype assigned to region `r`.
pub fn archetype_of(config: &SynthConfig, r: usize) -> Archetype {
    config.archetypes[r % config.archetypes.len()]
}

/// Build a panel with CF, DT, CCGR, DCGR (plus TR, TPR when requested).
pub fn generate(config: &SynthConfig) -> Result<WeeklyPanel> {
    if config.regions == 0 || config.weeks == 0 {
        return Err(Error::InvalidArgument("regions and weeks must be ≥ 1".into()));
    }
    if config.archetypes.is_empty() {
        return Err(Error::InvalidArgument("at least one archetype required".into()));
    }
    let group = config.group_size.max(1);
    let mut ids = Vec::with_capacity(config.regions);
    let mut pops = Vec::with_capacity(config.regions);
    let mut values = Vec::with_capacity(config.regions);
    let mut features: Vec<String> = vec![CF.into(), DT.into(), CCGR.into(), DCGR.into()];
    if config.with_testing {
        features.extend([TR.to_string(), TPR.to_string()]);
    }
    for r in 0..config.regions {
        let mut rng = child_rng(config.seed, &format!("synth/{r}"));
        let arch = archetype_of(config, r);
        let cf = arch.generate(config.weeks, &mut rng);
        let cfr = rng.gen_range(0.01..0.03);
        let dt: Vec<f64> = match arch {
            Archetype::Ar1 | Archetype::Flat(_) => cf.iter().map(|c| c * cfr).collect(),
            _ => (0..config.weeks)
                .map(|t| (cf[t.saturating_sub(2)] * cfr * rng.gen_range(0.7..1.3)).round())
                .collect(),
        };
        let population = rng.gen_range(2e5..5e6_f64).round();
        let mut cols = vec![cf.clone(), dt.clone(), growth_with_leading_zero(&cf)?, growth_with_leading_zero(&dt)?];
        if config.with_testing {
            let neg: Vec<f64> = cf.iter().map(|c| (c * rng.gen_range(5.0..20.0)).round()).collect();
            let (tr, tpr) = derive_testing_features(&cf, &neg, population)?;
            cols.push(tr);
            cols.push(tpr);
        }
        values.push((0..config.weeks).map(|t| cols.iter().map(|c| c[t]).collect()).collect());
        ids.push(RegionId::new(format!("R{r:02}"), Some(format!("G{}", r / group))));
        pops.push(Some(population));
    }
    let weeks = (0..config.weeks)
        .map(|t| config.first_week + Duration::days(7 * t as i64))
        .collect();
    WeeklyPanel::new(ids, pops, weeks, features, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_shaped() {
        let cfg = SynthConfig { seed: 7, ..Default::default() };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_regions(), 20);
        assert_eq!(a.num_weeks(), 25);
        assert_eq!(a.features().len(), 4);
        let c = generate(&SynthConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn flat_and_ar1_archetypes() {
        let cfg = SynthConfig {
            regions: 2,
            weeks: 12,
            archetypes: vec!["flat(5)".parse().unwrap(), Archetype::Ar1],
            ..Default::default()
        };
        let p = generate(&cfg).unwrap();
        assert_eq!(p.series(0, 0), vec![5.0; 12]);
        let x = p.series(1, 0);
        let a = (x[3] - x[2]) / (x[2] - x[1]);
        for t in 1..11 {
            let pred = x[t] + a * (x[t] - x[t - 1]);
            assert!((pred - x[t + 1]).abs() < 1e-9 * x[t + 1].abs().max(1.0));
        }
    }

    #[test]
    fn archetype_parsing() {
        assert_eq!("near-zero".parse::<Archetype>().unwrap(), Archetype::NearZero);
        assert_eq!("flat(2.5)".parse::<Archetype>().unwrap(), Archetype::Flat(2.5));
        assert!("wavy".parse::<Archetype>().is_err());
        assert_eq!(Archetype::Flat(3.0).to_string(), "flat(3)");
    }

    #[test]
    fn testing_features_optional() {
        let p = generate(&SynthConfig { with_testing: true, regions: 3, ..Default::default() }).unwrap();
        assert_eq!(p.features().len(), 6);
        let tpr = p.series_by_name(0, TPR).unwrap();
        assert!(tpr.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
