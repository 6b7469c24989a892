//! Multi-agent PPO with parameter sharing and a centralised critic.
//!
//! Episodes are collected with the hierarchical policy into an on-policy
//! [`RolloutBuffer`]. Once it holds enough transitions, advantages come from
//! GAE over a shared team reward, and the actor and critic take K epochs of
//! clipped updates on shuffled minibatches before the buffer is cleared.

pub mod buffer;
pub mod curriculum;
pub mod gae;
pub mod losses;
pub mod train;
pub mod update;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::policy::PolicyError;
use crate::rollout::RolloutError;
use crate::sim::SimError;

pub use buffer::{AgentRecord, RolloutBuffer, Transition};
pub use curriculum::{curriculum_sample, CurriculumSchedule, ScheduleKind, Stage};
pub use gae::{compute_gae, normalize};
pub use losses::{critic_loss, ppo_actor_loss};
pub use train::{train, EvalPoint, ExperimentConfig, MetricsRow, TrainOutcome};
pub use update::{update, Optimizers, UpdateStats};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("length mismatch in {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    pub value_clip: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    /// Transitions required in the buffer before an update (B_min).
    pub batch_size: usize,
    pub minibatch_size: usize,
    /// Transitions per autodiff tape inside a minibatch. Only affects memory.
    pub chunk_size: usize,
    pub epochs: usize,
    pub total_episodes: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub eval_n_range: (usize, usize),
    pub eval_rho_range: (f64, f64),
    pub curriculum_enabled: bool,
    pub schedule: ScheduleKind,
    pub normalize_advantages: bool,
    /// Adds the corridor-lane log-probability to planner-step entries.
    pub corridor_in_objective: bool,
    /// Writes a checkpoint at every evaluation.
    pub checkpoints: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            gamma: 0.99,
            lambda: 0.95,
            clip_eps: 0.2,
            value_clip: 10.0,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            batch_size: 256,
            minibatch_size: 256,
            chunk_size: 64,
            epochs: 10,
            total_episodes: 2000,
            eval_every: 100,
            eval_episodes: 20,
            eval_n_range: (6, 12),
            eval_rho_range: (0.5, 1.0),
            curriculum_enabled: true,
            schedule: ScheduleKind::Paper,
            normalize_advantages: true,
            corridor_in_objective: false,
            checkpoints: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if !(self.clip_eps > 0.0) {
            return bad(format!("clip_eps must be positive, got {}", self.clip_eps));
        }
        for (name, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("value_clip", self.value_clip),
            ("max_grad_norm", self.max_grad_norm),
        ] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("minibatch_size", self.minibatch_size),
            ("chunk_size", self.chunk_size),
            ("total_episodes", self.total_episodes),
            ("eval_every", self.eval_every),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        Ok(())
    }
}


#[cfg(test)]
mod config_tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn invariants_are_enforced() {
        for c in [
            TrainConfig {
                gamma: 1.0,
                ..Default::default()
            },
            TrainConfig {
                lambda: 1.5,
                ..Default::default()
            },
            TrainConfig {
                clip_eps: 0.0,
                ..Default::default()
            },
            TrainConfig {
                minibatch_size: 0,
                ..Default::default()
            },
        ] {
            assert!(c.validate().is_err(), "{c:?}");
        }
        let ok = TrainConfig {
            lambda: 0.0,
            ..Default::default()
        };
        ok.validate().unwrap();
    }
}
