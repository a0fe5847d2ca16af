use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Everything runs in units per 100k people.
pub const PER_100K: f64 = 100_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeirParams {
    pub incubation_days: f64,
    pub infectious_days: f64,
    pub delay_days: usize,
    pub ascertainment: f64,
    pub population: f64,
}

impl Default for SeirParams {
    fn default() -> Self {
        SeirParams {
            incubation_days: 5.5,
            infectious_days: 5.0,
            delay_days: 7,
            ascertainment: 0.15,
            population: PER_100K,
        }
    }
}

impl SeirParams {
    pub fn sigma(&self) -> f64 {
        1.0 / self.incubation_days
    }

    pub fn gamma(&self) -> f64 {
        1.0 / self.infectious_days
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.incubation_days > 0.0 && self.infectious_days > 0.0 && self.population > 0.0) {
            return Err(Error::InvalidArgument("SEIR rates and population must be positive".into()));
        }
        if !(self.ascertainment > 0.0 && self.ascertainment <= 1.0) {
            return Err(Error::InvalidArgument("ascertainment must lie in (0, 1]".into()));
        }
        if self.delay_days != 7 {
            return Err(Error::InvalidArgument("confirmation delay must be one week (7 days)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeirState {
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub r: f64,
    pub day: usize,
}

impl SeirState {
    pub fn total(&self) -> f64 {
        self.s + self.e + self.i + self.r
    }

    /// Seeds from a weekly confirmed count: that week's infections, spread
    /// over the infectious period, are infectious now; exposed in proportion.
    pub fn seeded(first_confirmed: f64, params: &SeirParams) -> Self {
        let weekly_infections = first_confirmed / params.ascertainment;
        let i = (weekly_infections * params.infectious_days / 7.0).min(params.population / 2.0);
        let e = (i * params.incubation_days / params.infectious_days).min(params.population / 2.0 - 1e-9 * params.population);
        SeirState { s: params.population - i - e, e, i, r: 0.0, day: 0 }
    }
}

/// One daily Euler step; returns the new state and the day's new infections.
/// Flows are clipped to the mass available in their source compartment.
pub fn seir_step(state: &SeirState, reff: f64, params: &SeirParams) -> (SeirState, f64) {
    let beta = reff.max(0.0) * params.gamma();
    let infection = (beta * state.s * state.i / params.population).clamp(0.0, state.s);
    let onset = (params.sigma() * state.e).clamp(0.0, state.e);
    let recovery = (params.gamma() * state.i).clamp(0.0, state.i);
    let next = SeirState {
        s: state.s - infection,
        e: state.e + infection - onset,
        i: state.i + onset - recovery,
        r: state.r + recovery,
        day: state.day + 1,
    };
    (next, infection)
}

/// Seven daily steps at a fixed R_eff; returns the state and the week's new
/// infections.
pub fn seir_week(state: &SeirState, reff: f64, params: &SeirParams) -> (SeirState, f64) {
    let mut s = *state;
    let mut total = 0.0;
    for _ in 0..7 {
        let (n, inf) = seir_step(&s, reff, params);
        s = n;
        total += inf;
    }
    (s, total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeirCalibration {
    pub params: SeirParams,
    /// R_eff per observed week; weeks before the first nonzero observation
    /// are 0 and the final week repeats its predecessor.
    pub reff: Vec<f64>,
    /// Simulated confirmations per observed week (observations are echoed
    /// up to and including the seeding week).
    pub sim_confirmed: Vec<f64>,
    pub observed: Vec<f64>,
    /// State at the start of the final observed week.
    pub state: SeirState,
}

impl SeirCalibration {
    pub fn last_reff(&self) -> f64 {
        self.reff.last().copied().unwrap_or(0.0)
    }
}

/// Golden-section minimisation on `[lo, hi]` to interval width `tol`.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

pub const REFF_BOUNDS: (f64, f64) = (0.0, 10.0);
pub const REFF_TOLERANCE: f64 = 1e-3;

/// Weekly R_eff fitted sequentially: infections simulated in week `w` are
/// confirmed (times the ascertainment rate) in week `w + 1`, and R_eff for
/// week `w` minimises the squared miss against observation `w + 1`.
pub fn seir_calibrate(observed: &[f64], params: &SeirParams) -> Result<SeirCalibration> {
    params.validate()?;
    if observed.is_empty() {
        return Err(Error::Empty("SEIR observations"));
    }
    if let Some(v) = observed.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::Negative { value: *v, at: "SEIR observations".into() });
    }
    let w = observed.len();
    let mut reff = vec![0.0; w];
    let mut sim = observed.to_vec();
    let Some(first) = observed.iter().position(|v| *v > 0.0) else {
        let state = SeirState { s: params.population, e: 0.0, i: 0.0, r: 0.0, day: 0 };
        return Ok(SeirCalibration { params: *params, reff, sim_confirmed: sim, observed: observed.to_vec(), state });
    };
    let mut state = SeirState::seeded(observed[first], params);
    for week in first..w.saturating_sub(1) {
        let target = observed[week + 1];
        let miss = |r: f64| {
            let (_, inf) = seir_week(&state, r, params);
            (inf * params.ascertainment - target).powi(2)
        };
        let r = golden_section(miss, REFF_BOUNDS.0, REFF_BOUNDS.1, REFF_TOLERANCE);
        let (next, inf) = seir_week(&state, r, params);
        reff[week] = r;
        sim[week + 1] = inf * params.ascertainment;
        state = next;
    }
    if w >= 2 && first < w - 1 {
        reff[w - 1] = reff[w - 2];
    }
    Ok(SeirCalibration { params: *params, reff, sim_confirmed: sim, observed: observed.to_vec(), state })
}

/// Weekly confirmations for the next `horizons` weeks with the last R_eff
/// held fixed.
pub fn seir_forecast(cal: &SeirCalibration, horizons: usize) -> Vec<f64> {
    let r = cal.last_reff();
    let mut state = cal.state;
    (0..horizons)
        .map(|_| {
            let (next, inf) = seir_week(&state, r, &cal.params);
            state = next;
            inf * cal.params.ascertainment
        })
        .collect()
}

/// CSV rows `region,week,reff,sim_confirmed,obs_confirmed`.
pub fn write_calibration_csv<W: Write>(out: W, rows: &[(String, SeirCalibration)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["region", "week", "reff", "sim_confirmed", "obs_confirmed"])?;
    for (region, cal) in rows {
        for t in 0..cal.observed.len() {
            w.write_record([
                region.clone(),
                t.to_string(),
                cal.reff[t].to_string(),
                cal.sim_confirmed[t].to_string(),
                cal.observed[t].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Forward simulation from the same seeding the calibrator uses.
    pub(crate) fn constant_reff_trajectory(first: f64, reff: f64, weeks: usize, params: &SeirParams) -> Vec<f64> {
        let mut obs = vec![first];
        let mut state = SeirState::seeded(first, params);
        for _ in 1..weeks {
            let (next, inf) = seir_week(&state, reff, params);
            obs.push(inf * params.ascertainment);
            state = next;
        }
        obs
    }

    #[test]
    fn conservation_over_200_steps() {
        let p = SeirParams::default();
        let mut s = SeirState { s: 99_000.0, e: 500.0, i: 500.0, r: 0.0, day: 0 };
        for d in 0..200 {
            s = seir_step(&s, 2.0 + (d % 5) as f64, &p).0;
            assert!((s.total() - p.population).abs() <= 1e-9);
            assert!(s.s >= 0.0 && s.e >= 0.0 && s.i >= 0.0);
        }
    }

    #[test]
    fn extreme_beta_clips_flows() {
        let p = SeirParams::default();
        let s = SeirState { s: 10.0, e: 0.0, i: 99_990.0, r: 0.0, day: 0 };
        let (n, inf) = seir_step(&s, 1e6, &p);
        assert_eq!(inf, 10.0);
        assert_eq!(n.s, 0.0);
    }

    #[test]
    fn zero_reff_and_fixed_point() {
        let p = SeirParams::default();
        let s0 = SeirState { s: 90_000.0, e: 5_000.0, i: 5_000.0, r: 0.0, day: 0 };
        let (s1, inf) = seir_week(&s0, 0.0, &p);
        assert_eq!(inf, 0.0);
        assert_eq!(s1.s, s0.s);
        assert!(s1.e < s0.e && s1.r > 0.0);
        let still = SeirState { s: 100_000.0, e: 0.0, i: 0.0, r: 0.0, day: 0 };
        let (n, _) = seir_week(&still, 3.0, &p);
        assert_eq!((n.s, n.e, n.i, n.r), (still.s, 0.0, 0.0, 0.0));
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_section(|x| (x - 2.7).powi(2), 0.0, 10.0, 1e-6);
        assert!((x - 2.7).abs() < 1e-6);
    }

    #[test]
    fn round_trip_constant_reff() {
        let p = SeirParams::default();
        let full = constant_reff_trajectory(20.0, 1.5, 16, &p);
        let cal = seir_calibrate(&full[..12], &p).unwrap();
        for r in &cal.reff {
            assert!((r - 1.5).abs() < 0.1, "{:?}", cal.reff);
        }
        let f = seir_forecast(&cal, 4);
        for (got, want) in f.iter().zip(&full[12..]) {
            assert!((got - want).abs() <= 0.1 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn all_zero_observations() {
        let cal = seir_calibrate(&[0.0; 6], &SeirParams::default()).unwrap();
        assert!(cal.reff.iter().all(|r| *r == 0.0));
        assert_eq!(seir_forecast(&cal, 4), vec![0.0; 4]);
    }

    #[test]
    fn zero_reff_forecasts_decay() {
        let p = SeirParams::default();
        let mut cal = seir_calibrate(&constant_reff_trajectory(50.0, 1.2, 6, &p), &p).unwrap();
        *cal.reff.last_mut().unwrap() = 0.0;
        let f = seir_forecast(&cal, 4);
        assert!(f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn growing_epidemic_forecasts_increase() {
        let p = SeirParams::default();
        let cal = seir_calibrate(&constant_reff_trajectory(5.0, 2.0, 6, &p), &p).unwrap();
        let f = seir_forecast(&cal, 4);
        assert!(f.windows(2).all(|w| w[1] > w[0]), "{f:?}");
    }

    #[test]
    fn delay_shifts_by_one_week() {
        // A pulse of infectious people in week 0 with R_eff > 0 produces
        // confirmations attributed to week 1, not week 0.
        let p = SeirParams::default();
        let cal = seir_calibrate(&[10.0, 0.0, 0.0], &p).unwrap();
        assert!(cal.reff[0] < 0.01);
        let cal = seir_calibrate(&[10.0, 30.0, 0.0], &p).unwrap();
        assert!(cal.reff[0] > 0.5);
        assert!((cal.sim_confirmed[1] - 30.0).abs() < 0.5);
    }

    #[test]
    fn larger_signal_never_uniformly_lowers_reff() {
        let p = SeirParams::default();
        for r in [0.8, 1.2, 1.5, 2.0] {
            let obs = constant_reff_trajectory(10.0, r, 8, &p);
            let big: Vec<f64> = obs.iter().map(|v| v * 1.5).collect();
            let a = seir_calibrate(&obs, &p).unwrap();
            let b = seir_calibrate(&big, &p).unwrap();
            assert!(a.reff.iter().zip(&b.reff).any(|(x, y)| y >= x));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(seir_calibrate(&[], &SeirParams::default()).is_err());
        assert!(seir_calibrate(&[1.0, -1.0], &SeirParams::default()).is_err());
        let bad = SeirParams { ascertainment: 0.0, ..Default::default() };
        assert!(seir_calibrate(&[1.0], &bad).is_err());
    }

    #[test]
    fn trace_csv() {
        let cal = seir_calibrate(&[0.0, 1.0, 2.0], &SeirParams::default()).unwrap();
        let mut buf = Vec::new();
        write_calibration_csv(&mut buf, &[("R00".into(), cal)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("region,week,reff,sim_confirmed,obs_confirmed\nR00,0,0,0,0\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
