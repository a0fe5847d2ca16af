//! Classical comparison models: persistence, the autoregressive family and a
//! calibrated SEIR compartmental model.

mod ar;
pub mod ols;
mod seir;

pub use ar::{ar_fit, ar_fit_pooled, ar_forecast, arma_fit, residuals, var_fit, var_forecast, ArModel, ArScope, VarModel};
pub use seir::{
    golden_section, seir_calibrate, seir_forecast, seir_step, seir_week, write_calibration_csv, SeirCalibration, SeirParams,
    SeirState, PER_100K, REFF_BOUNDS, REFF_TOLERANCE,
};

use crate::error::{Error, Result};

/// Every horizon repeats the last observation.
pub fn naive_forecast(series: &[f64], horizons: usize) -> Result<Vec<f64>> {
    let last = *series.last().ok_or(Error::Empty("naive series"))?;
    Ok(vec![last; horizons])
}
