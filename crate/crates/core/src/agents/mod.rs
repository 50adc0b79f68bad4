//! Value-based agents: an online DQN used as the behaviour policy and a
//! discrete batch-constrained Q-learner trained purely from datasets.

pub mod bcq;
pub mod dqn;

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::cartpole::EnvError;
use crate::dataset::DatasetError;
use crate::net::NetError;

pub use bcq::{bcq_act, bcq_train_step, train_bcq, BcqAgent, BcqConfig, BcqHeader, BcqStepStats};
pub use dqn::{collect_offline_buffer, dqn_act, evaluate_greedy, train_dqn, DqnAgent, DqnConfig, DqnReport, ReplayBuffer};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("state has {got} components, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AgentError>;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(AgentError::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| AgentError::Format(e.to_string()))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| AgentError::Format(format!("{}: {e}", path.display())))
}
