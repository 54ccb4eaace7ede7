//! Orchestration for the toolkit: configuration, the five commands and the
//! persisted run records they share.

pub mod bundles;
pub mod config;
pub mod evaluate;
pub mod extract;
pub mod fsutil;
pub mod models;
pub mod record;
pub mod report;
pub mod train;

pub use bundles::{prepare, PrepareSummary};
pub use config::ToolkitConfig;
pub use evaluate::{evaluate, Evaluation};
pub use extract::{extract, FeatureManifest};
pub use models::{Downstream, ModelKey};
pub use record::{RunRecord, TrainRequest};
pub use report::{report, Report};
pub use train::{replay, train, TrainArgs};
