use serde::{Deserialize, Serialize};

use super::ols::{centered_least_squares, centered_least_squares_with, RankPolicy};
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArScope {
    PerRegion,
    Global,
    Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub p: usize,
    pub q: usize,
    pub intercept: f64,
    /// `phi[i]` multiplies `x_{t−1−i}`.
    pub phi: Vec<f64>,
    /// `theta[j]` multiplies the innovation `e_{t−1−j}`.
    pub theta: Vec<f64>,
    pub scope: ArScope,
}

fn lag_rows(series: &[f64], p: usize, rows: &mut Vec<Vec<f64>>, ys: &mut Vec<f64>) {
    for t in p..series.len() {
        rows.push((1..=p).map(|i| series[t - i]).collect());
        ys.push(series[t]);
    }
}

fn check_rows(rows: usize, p: usize) -> Result<()> {
    if rows <= p + 1 {
        return Err(Error::IllPosed { parameters: p + 1, observations: rows });
    }
    Ok(())
}

/// OLS AR(p) on one series.
pub fn ar_fit(series: &[f64], p: usize) -> Result<ArModel> {
    let mut m = ar_fit_pooled(&[series.to_vec()], p)?;
    m.scope = ArScope::PerRegion;
    Ok(m)
}

/// One AR(p) over the stacked lag rows of every series.
pub fn ar_fit_pooled(series: &[Vec<f64>], p: usize) -> Result<ArModel> {
    if p == 0 {
        return Err(Error::InvalidArgument("AR order must be at least 1".into()));
    }
    let (mut rows, mut ys) = (Vec::new(), Vec::new());
    for s in series {
        lag_rows(s, p, &mut rows, &mut ys);
    }
    check_rows(rows.len(), p)?;
    let (intercept, phi) = centered_least_squares(&rows, &ys)?;
    Ok(ArModel { p, q: 0, intercept, phi, theta: Vec::new(), scope: ArScope::Global })
}

/// In-sample innovations `e_t = x_t − x̂_t`; zero for the first `p` points.
pub fn residuals(model: &ArModel, history: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; history.len()];
    for t in model.p..history.len() {
        e[t] = history[t] - one_step(model, history, &e, t);
    }
    e
}

fn one_step(model: &ArModel, x: &[f64], e: &[f64], t: usize) -> f64 {
    let ar: f64 = model.phi.iter().enumerate().map(|(i, f)| f * x[t - 1 - i]).sum();
    let ma: f64 = model
        .theta
        .iter()
        .enumerate()
        .filter(|(j, _)| t > *j)
        .map(|(j, th)| th * e[t - 1 - j])
        .sum();
    model.intercept + ar + ma
}

/// Recursive forecasts for horizons `1..=horizons`; unobserved innovations
/// are zero. Outputs are clamped at zero.
pub fn ar_forecast(model: &ArModel, history: &[f64], horizons: usize) -> Result<Vec<f64>> {
    if history.len() < model.p {
        return Err(Error::InvalidArgument(format!("history of {} points for AR order {}", history.len(), model.p)));
    }
    let mut x = history.to_vec();
    let mut e = residuals(model, history);
    let mut out = Vec::with_capacity(horizons);
    for _ in 0..horizons {
        let t = x.len();
        let v = one_step(model, &x, &e, t);
        x.push(v);
        e.push(0.0);
        out.push(v.max(0.0));
    }
    Ok(out)
}

/// Two-stage Hannan–Rissanen ARMA(p, q): a long AR supplies innovation
/// estimates, then OLS on lagged values and lagged innovations.
pub fn arma_fit(series: &[f64], p: usize, q: usize) -> Result<ArModel> {
    if q == 0 {
        return ar_fit(series, p);
    }
    let n = series.len();
    if n < 20 {
        return Err(Error::InvalidArgument(format!("ARMA needs at least 20 observations, got {n}")));
    }
    let long = (p + q).max((n / 4).min(10));
    let long_model = ar_fit(series, long)?;
    let e = residuals(&long_model, series);
    regress_on_innovations(series, &e, p, q, long + q)
}

fn regress_on_innovations(series: &[f64], e: &[f64], p: usize, q: usize, start: usize) -> Result<ArModel> {
    let n = series.len();
    let (mut rows, mut ys) = (Vec::new(), Vec::new());
    for t in start.max(p)..n {
        let mut r: Vec<f64> = (1..=p).map(|i| series[t - i]).collect();
        r.extend((1..=q).map(|j| e[t - j]));
        rows.push(r);
        ys.push(series[t]);
    }
    check_rows(rows.len(), p + q)?;
    let (intercept, beta) = centered_least_squares(&rows, &ys)?;
    Ok(ArModel {
        p,
        q,
        intercept,
        phi: beta[..p].to_vec(),
        theta: beta[p..].to_vec(),
        scope: ArScope::PerRegion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    pub p: usize,
    pub intercepts: Vec<f64>,
    /// `coefficients[l]` row i, column j: effect of region j at lag `l + 1`
    /// on region i.
    pub coefficients: Vec<Matrix>,
}

/// Per-equation OLS of each region on `p` lags of every region. Collinear
/// regions get the minimum-norm solution.
pub fn var_fit(series: &[Vec<f64>], p: usize) -> Result<VarModel> {
    let r = series.len();
    if r == 0 {
        return Err(Error::Empty("VAR regions"));
    }
    if p == 0 {
        return Err(Error::InvalidArgument("VAR order must be at least 1".into()));
    }
    let n = series[0].len();
    if let Some(bad) = series.iter().find(|s| s.len() != n) {
        return Err(Error::dim("VAR series length", n, bad.len()));
    }
    let observations = n.saturating_sub(p);
    let parameters = p * r + 1;
    if parameters > observations {
        return Err(Error::IllPosed { parameters, observations });
    }
    let rows: Vec<Vec<f64>> = (p..n)
        .map(|t| (1..=p).flat_map(|l| series.iter().map(move |s| s[t - l])).collect())
        .collect();
    let mut intercepts = Vec::with_capacity(r);
    let mut coefficients = vec![Matrix::zeros(r, r); p];
    for (i, s) in series.iter().enumerate() {
        let (c, beta) = centered_least_squares_with(&rows, &s[p..], RankPolicy::MinNorm)?;
        intercepts.push(c);
        for l in 0..p {
            for j in 0..r {
                coefficients[l].set(i, j, beta[l * r + j]);
            }
        }
    }
    Ok(VarModel { p, intercepts, coefficients })
}

/// Recursive joint forecasts; `out[region][h − 1]`, clamped at zero.
pub fn var_forecast(model: &VarModel, history: &[Vec<f64>], horizons: usize) -> Result<Vec<Vec<f64>>> {
    let r = model.intercepts.len();
    if history.len() != r {
        return Err(Error::dim("VAR history regions", r, history.len()));
    }
    let mut x: Vec<Vec<f64>> = history.to_vec();
    if x.iter().any(|s| s.len() < model.p) {
        return Err(Error::InvalidArgument("VAR history shorter than its order".into()));
    }
    let mut out = vec![Vec::with_capacity(horizons); r];
    for _ in 0..horizons {
        let t = x[0].len();
        let next: Vec<f64> = (0..r)
            .map(|i| {
                model.intercepts[i]
                    + (0..model.p)
                        .map(|l| (0..r).map(|j| model.coefficients[l].get(i, j) * x[j][t - 1 - l]).sum::<f64>())
                        .sum::<f64>()
            })
            .collect();
        for i in 0..r {
            x[i].push(next[i]);
            out[i].push(next[i].max(0.0));
        }
    }
    Ok(out)
}
