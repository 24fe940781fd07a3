//! Training loop, evaluation metrics and cross-validation.

mod crossval;
mod metrics;
mod trainer;

pub use crossval::{cross_validate, cross_validate_split, fit_holdout, mean_std, CvReport, FoldResult, MetricSummary};
pub use metrics::{evaluate, task_metrics, Confusion, Metrics};
pub use trainer::{train, train_with_observer, EpochRecord, TrainConfig, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::models::ArchConfig;
use crate::Result;

/// Contents of a `--config` file: training settings and head shapes, both
/// optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub arch: ArchConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.train.validate()?;
        Ok(cfg)
    }
}
