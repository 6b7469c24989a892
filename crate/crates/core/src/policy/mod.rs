//! Hierarchical graph-attention actor and centralised critic.
//!
//! The planner reads the global traffic graph and assigns each connected
//! vehicle one of four coordination strategies. The controller reads the
//! vehicle's local subgraph together with its strategy and outputs an
//! acceleration and a lane offset. The critic pools the global graph into a
//! state value.

pub mod act;
pub mod batch;
pub mod checkpoint;
pub mod dist;
pub mod gat;
pub mod networks;
pub mod params;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::graph::{GraphConfig, GraphError};

pub use act::{hierarchical_act, ActMode, ActOutput, AgentStep, StrategyCache};
pub use batch::GraphBatch;
pub use networks::{PlannerOutput, Policy};
pub use params::{Bound, ParamId, ParamStore};

pub const STRATEGY_COUNT: usize = 4;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("node {node} has no incoming edge")]
    IsolatedNode { node: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum Strategy {
    AggressiveYield,
    #[default]
    NormalYield,
    HoldPosition,
    Accelerate,
}

impl Strategy {
    pub const ALL: [Strategy; STRATEGY_COUNT] = [
        Strategy::AggressiveYield,
        Strategy::NormalYield,
        Strategy::HoldPosition,
        Strategy::Accelerate,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::AggressiveYield => "aggressive_yield",
            Strategy::NormalYield => "normal_yield",
            Strategy::HoldPosition => "hold_position",
            Strategy::Accelerate => "accelerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub planner_heads: usize,
    pub controller_heads: usize,
    pub critic_heads: usize,
    pub lane_count: usize,
    /// `false` bypasses the planner and feeds a zero strategy embedding.
    pub hierarchical: bool,
    pub uniform_attention: bool,
    pub edge_features: bool,
    pub init_log_std: f64,
    /// Planner refresh period in simulation steps.
    pub planner_interval: u64,
    pub graph: GraphConfig,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            planner_heads: 4,
            controller_heads: 2,
            critic_heads: 4,
            lane_count: 2,
            hierarchical: true,
            uniform_attention: false,
            edge_features: true,
            init_log_std: 0.5f64.ln(),
            planner_interval: 5,
            graph: GraphConfig::default(),
        }
    }
}

impl PolicyConfig {
    pub fn flat() -> Self {
        Self {
            hierarchical: false,
            ..Self::default()
        }
    }
}
