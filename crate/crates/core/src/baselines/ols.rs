use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition numbers above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e10;

/// What to do with a rank-deficient design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankPolicy {
    /// Report `Error::Singular` with the condition number.
    Reject,
    /// Return the minimum-norm solution.
    MinNorm,
}

/// Least-squares coefficients of `y` on the rows of `design` via SVD.
pub fn least_squares(design: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    least_squares_with(design, y, RankPolicy::Reject)
}

pub fn least_squares_with(design: &[Vec<f64>], y: &[f64], policy: RankPolicy) -> Result<Vec<f64>> {
    let n = design.len();
    if n == 0 {
        return Err(Error::Empty("regression rows"));
    }
    if y.len() != n {
        return Err(Error::dim("regression targets", n, y.len()));
    }
    let k = design[0].len();
    if design.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidArgument("ragged design matrix".into()));
    }
    if n < k && policy == RankPolicy::Reject {
        return Err(Error::IllPosed { parameters: k, observations: n });
    }
    let x = DMatrix::from_fn(n, k, |i, j| design[i][j]);
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if policy == RankPolicy::Reject && !(condition <= MAX_CONDITION) {
        return Err(Error::Singular { condition });
    }
    let beta = svd
        .solve(&DVector::from_column_slice(y), smax / MAX_CONDITION)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(beta.iter().copied().collect())
}

/// Fits `y ≈ c + Σ β_j x_j` with centred columns. A design whose centred
/// columns are all zero yields `β = 0` and `c = mean(y)`.
pub fn centered_least_squares(design: &[Vec<f64>], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    centered_least_squares_with(design, y, RankPolicy::Reject)
}

pub fn centered_least_squares_with(design: &[Vec<f64>], y: &[f64], policy: RankPolicy) -> Result<(f64, Vec<f64>)> {
    let n = design.len();
    if n == 0 {
        return Err(Error::Empty("regression rows"));
    }
    if y.len() != n {
        return Err(Error::dim("regression targets", n, y.len()));
    }
    let k = design[0].len();
    let means: Vec<f64> = (0..k).map(|j| design.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let centred: Vec<Vec<f64>> = design.iter().map(|r| r.iter().zip(&means).map(|(v, m)| v - m).collect()).collect();
    let yc: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    if centred.iter().flatten().all(|v| *v == 0.0) {
        return Ok((ybar, vec![0.0; k]));
    }
    if n < k + 1 && policy == RankPolicy::Reject {
        return Err(Error::IllPosed { parameters: k + 1, observations: n });
    }
    let beta = least_squares_with(&centred, &yc, policy)?;
    let intercept = ybar - beta.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    Ok((intercept, beta))
}
