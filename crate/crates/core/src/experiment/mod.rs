//! Two-phase experiment: a single-seed collection run that produces every
//! shared artifact, then independent per-seed BCQ training and evaluation on
//! the held-out environments, aggregated into tables and a ratio plot.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod stats;

use std::fmt::Display;

use thiserror::Error;

pub use config::{ExperimentConfig, SeedRange};
pub use pipeline::{
    artifact_checksums, evaluate_on_env, run_collection, run_experiment, run_seed, stage_augment, stage_collect,
    stage_train_ae, train_variant, write_report, Artifacts, CollectionSummary, Layout,
};
pub use report::{parse_csv, render_markdown, render_ratio_svg, ExperimentReport, ResultCell, RunRecord, AVERAGE_LABEL};
pub use stats::mean_sem;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage '{stage}' failed: {message}")]
    Stage { stage: String, message: String },
    #[error("report: {0}")]
    Report(String),
}

impl ExperimentError {
    pub fn stage(stage: impl Into<String>, err: impl Display) -> Self {
        ExperimentError::Stage {
            stage: stage.into(),
            message: err.to_string(),
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, ExperimentError::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;
