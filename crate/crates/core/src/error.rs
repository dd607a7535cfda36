use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid bucket, training or sweep parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input outside the domain of an operation (empty set, bad permutation, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("value {value} outside range [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("{path}: schema mismatch: {reason}")]
    Schema { path: PathBuf, reason: String },

    #[error("instance has {actual} videos, limit is {limit}")]
    TooLarge { actual: usize, limit: usize },

    #[error("training diverged at step {step}: actor loss {actor_loss}, critic loss {critic_loss}")]
    Divergence {
        step: usize,
        actor_loss: f64,
        critic_loss: f64,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
