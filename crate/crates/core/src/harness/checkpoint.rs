//! Versioned JSON snapshots of a trained pool.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::pool::PoolModel;
use crate::error::{Error, Result};
use crate::panel::PanelScaler;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// Last training week.
    pub trained_through: NaiveDate,
    pub members: Vec<String>,
    pub seed: u64,
    pub scaler: PanelScaler,
    pub model: PoolModel,
}

impl Checkpoint {
    pub fn new(trained_through: NaiveDate, members: Vec<String>, seed: u64, scaler: PanelScaler, model: PoolModel) -> Self {
        Checkpoint { version: CHECKPOINT_VERSION, trained_through, members, seed, scaler, model }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                c.version
            )));
        }
        Ok(c)
    }
}
