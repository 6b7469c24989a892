//! Two-timescale acting: the planner refreshes strategies every few steps,
//! the controller turns each CV's strategy and neighbourhood into a control.

use std::collections::BTreeMap;
use std::rc::Rc;

use rand::Rng;

use crate::autodiff::{Tape, Tensor};
use crate::graph::{build_graph, build_local, LocalSubgraph, TrafficGraph};
use crate::sim::{CvAction, World};

use super::dist::{argmax, gaussian_log_prob, sample_categorical, sample_gaussian};
use super::{Policy, PolicyError, Strategy, STRATEGY_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Stochastic,
    Deterministic,
}

/// Strategies held between planner refreshes, keyed by CV id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StrategyCache {
    pub strategies: BTreeMap<u32, Strategy>,
}

/// One CV's decision at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentStep {
    pub id: u32,
    pub strategy: Strategy,
    /// Log-probability of the strategy draw, present on planner steps.
    pub strategy_log_prob: Option<f64>,
    pub mean: [f64; 2],
    /// Raw sampled `[accel, lane_offset]`; the simulator clamps it.
    pub action: [f64; 2],
    pub action_log_prob: f64,
    pub local: LocalSubgraph,
}

impl AgentStep {
    /// Joint log-probability of everything this agent sampled at the step.
    pub fn log_prob(&self) -> f64 {
        self.action_log_prob + self.strategy_log_prob.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActOutput {
    pub actions: BTreeMap<u32, CvAction>,
    pub agents: Vec<AgentStep>,
    pub planner_step: bool,
    pub value: f64,
    pub graph: TrafficGraph,
    /// Corridor-lane distribution from the planner, when it ran.
    pub corridor_probs: Option<Vec<f64>>,
    /// Corridor lane chosen from that distribution and its log-probability.
    pub corridor_choice: Option<(usize, f64)>,
    /// Head-averaged final-layer planner attention per edge, when it ran.
    pub attention: Option<Vec<f64>>,
}

fn one_hot_rows(strategies: &[Option<Strategy>]) -> Tensor {
    let mut t = Tensor::zeros(strategies.len(), STRATEGY_COUNT);
    for (r, s) in strategies.iter().enumerate() {
        if let Some(s) = s {
            t.data[r * STRATEGY_COUNT + s.index()] = 1.0;
        }
    }
    t
}

/// Strategy one-hot rows for the controller; all zeros in flat mode.
pub fn strategy_inputs(policy: &Policy, strategies: &[Strategy]) -> Tensor {
    if policy.config.hierarchical {
        one_hot_rows(&strategies.iter().map(|&s| Some(s)).collect::<Vec<_>>())
    } else {
        Tensor::zeros(strategies.len(), STRATEGY_COUNT)
    }
}

/// Chooses every CV's action for the current world state.
pub fn hierarchical_act<R: Rng + ?Sized>(
    world: &World,
    policy: &Policy,
    cache: &mut StrategyCache,
    rng: &mut R,
    mode: ActMode,
) -> Result<ActOutput, PolicyError> {
    let graph = build_graph(world, &policy.config.graph);
    let cv_ids = world.cv_ids();
    cache.strategies.retain(|id, _| cv_ids.contains(id));

    let tape = Tape::new();
    let p = policy.params.bind(&tape);
    let global = policy.batch(&[&graph])?;
    let value = tape.scalar(policy.critic_forward(&tape, &p, &global)?);

    let hierarchical = policy.config.hierarchical;
    let planner_step = hierarchical
        && !cv_ids.is_empty()
        && (world.t.is_multiple_of(policy.config.planner_interval)
            || cv_ids.iter().any(|id| !cache.strategies.contains_key(id)));

    let mut strategy_lp: BTreeMap<u32, f64> = BTreeMap::new();
    let mut corridor_probs = None;
    let mut corridor_choice = None;
    let mut attention = None;
    if planner_step {
        let out = policy.planner_forward(&tape, &p, &global)?;
        let log_probs = tape.value(out.strategy_log_probs);
        for (row, &node) in global.cv_nodes.iter().enumerate() {
            let id = graph.node_ids[node];
            let lp = log_probs.row_slice(row);
            let probs: Vec<f64> = lp.iter().map(|x| x.exp()).collect();
            let k = match mode {
                ActMode::Stochastic => sample_categorical(rng, &probs),
                ActMode::Deterministic => argmax(&probs),
            };
            cache.strategies.insert(id, Strategy::from_index(k));
            strategy_lp.insert(id, lp[k]);
        }
        let corridor_lp = tape.value(out.corridor_log_probs).data;
        let probs: Vec<f64> = corridor_lp.iter().map(|x| x.exp()).collect();
        let lane = match mode {
            ActMode::Stochastic => sample_categorical(rng, &probs),
            ActMode::Deterministic => argmax(&probs),
        };
        corridor_choice = Some((lane, corridor_lp[lane]));
        corridor_probs = Some(probs);
        let alpha = tape.value(*out.attention.last().expect("planner has layers"));
        attention = Some(
            (0..alpha.rows)
                .map(|r| alpha.row_slice(r).iter().sum::<f64>() / alpha.cols as f64)
                .collect(),
        );
    }

    let mut locals = Vec::with_capacity(cv_ids.len());
    for &id in &cv_ids {
        locals.push(build_local(world, id, &policy.config.graph)?);
    }
    let strategies: Vec<Strategy> = cv_ids
        .iter()
        .map(|id| cache.strategies.get(id).copied().unwrap_or_default())
        .collect();

    let mut agents = Vec::with_capacity(cv_ids.len());
    let mut actions = BTreeMap::new();
    if !cv_ids.is_empty() {
        let refs: Vec<&TrafficGraph> = locals.iter().map(|l| &l.graph).collect();
        let batch = policy.batch(&refs)?;
        let egos: Rc<[usize]> = locals.iter().zip(&batch.offsets).map(|(l, o)| o + l.ego_node).collect();
        let means =
            tape.value(policy.controller_forward(&tape, &p, &batch, egos, strategy_inputs(policy, &strategies))?);
        let log_std = policy.params.get(policy.log_std).data.clone();
        for (i, (id, local)) in cv_ids.iter().zip(locals).enumerate() {
            let mean = [means.get(i, 0), means.get(i, 1)];
            let action = match mode {
                ActMode::Stochastic => {
                    let a = sample_gaussian(rng, &mean, &log_std);
                    [a[0], a[1]]
                }
                ActMode::Deterministic => mean,
            };
            actions.insert(*id, CvAction::new(action[0], action[1]));
            agents.push(AgentStep {
                id: *id,
                strategy: strategies[i],
                strategy_log_prob: strategy_lp.get(id).copied(),
                mean,
                action,
                action_log_prob: gaussian_log_prob(&mean, &log_std, &action),
                local,
            });
        }
    }

    Ok(ActOutput {
        actions,
        agents,
        planner_step,
        value,
        graph,
        corridor_probs,
        corridor_choice,
        attention,
    })
}
