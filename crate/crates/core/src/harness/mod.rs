//! Experiment harness: configuration files, paired evaluation reports,
//! baseline and ablation runs, run manifests and the command-line front end.
//!
//! Every evaluation goes through [`run_baseline`], which draws one scenario
//! list per [`Bucket`] from a seed and replays it under the requested
//! policy. Two reports built from the same seed therefore start every
//! episode from the same initial world, which the reports record as hashes.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod manifest;
pub mod report;

use thiserror::Error;

use crate::policy::PolicyError;
use crate::rollout::RolloutError;
use crate::sim::SimError;
use crate::trainer::TrainError;

pub use baselines::{bucket_scenarios, default_buckets, load_policy, run_baseline, Bucket, PolicyName};
pub use config::{load_config, parse_config};
pub use manifest::RunManifest;
pub use report::{read_episodes_csv, BucketReport, EvalReport, EPISODES_HEADER};

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad invocation or configuration; maps to exit code 1.
    #[error("{0}")]
    Usage(String),
    #[error("unknown policy `{name}`; valid names: {valid}")]
    UnknownPolicy { name: String, valid: String },
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("malformed episodes csv at line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code: 1 for usage and config problems, 2 for runtime
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) | HarnessError::UnknownPolicy { .. } | HarnessError::Config { .. } => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
