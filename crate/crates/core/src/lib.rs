//! Weekly epidemic case forecasting: small recurrent models trained on
//! clustered data pools, a stacking ensemble over them, classical baselines
//! and a rolling-origin evaluation harness.

pub mod attention;
pub mod baselines;
pub mod clustering;
pub mod ensemble;
pub mod harness;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod recurrent;
pub mod rng;

pub use error::{Error, Result};
pub mod panel;
