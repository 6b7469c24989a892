//! Hierarchical graph-attention multi-agent reinforcement learning for
//! emergency-vehicle corridor formation.
//!
//! The crate bundles everything needed to reproduce the experiments at desk
//! scale:
//!
//! - [`sim`]: deterministic microscopic traffic world (Krauss human drivers,
//!   commanded connected vehicles, an emergency vehicle entering upstream).
//! - [`graph`]: dynamic vehicle-interaction graphs with 8-d node and 4-d edge
//!   features, plus per-agent local subgraphs.
//! - [`autodiff`]: a small tape-based reverse-mode autodiff over dense `f64`
//!   matrices.
//! - [`policy`]: the GAT planner, local controller and centralized critic.
//! - [`reward`]: the five-term team reward.
//! - [`trainer`]: GAE, clipped PPO with parameter sharing, curriculum.
//! - [`metrics`]: EMV travel time, corridor time, collision rate, efficiency.
//! - [`rollout`]: episode runner with no-control, random and policy drivers.
//! - [`harness`]: configuration, paired evaluation reports, baselines and
//!   the CLI.
//!
//! Runnable walkthroughs live in `examples/`.

pub mod autodiff;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod rollout;
pub mod sim;
pub mod trainer;
