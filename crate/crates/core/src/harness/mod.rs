//! Rolling-origin experiment runner: clustering, training of the model zoo,
//! baselines, stacking, and report files.

pub mod checkpoint;
pub mod config;
pub mod methods;
pub mod pool;
pub mod report;
pub mod run;
pub mod schedule;

pub use checkpoint::Checkpoint;
pub use config::{ExperimentConfig, Resolution};
pub use methods::{canonical_methods, Baseline, CategoryMap, FeatureMode, Method, CANONICAL_METHODS};
pub use pool::{train_pool, PoolModel};
pub use report::{aggregate_by_category, score_methods, write_evaluation, write_reports};
pub use run::{run_framework, Failure, Forecast, RunOutput, TrainingRecord};
pub use schedule::{rolling_origin, ScheduleEntry};
