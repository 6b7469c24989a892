//! On-policy rollout storage.

use crate::graph::TrafficGraph;
use crate::policy::{ActOutput, Strategy};

use super::gae::{compute_gae, normalize};
use super::{Result, TrainError};

/// One CV's decision at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    /// Row of this CV among the global graph's CV nodes.
    pub cv_row: usize,
    pub strategy: Strategy,
    pub strategy_log_prob: Option<f64>,
    pub action: [f64; 2],
    pub action_log_prob: f64,
    pub local: TrafficGraph,
    pub ego: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub graph: TrafficGraph,
    pub agents: Vec<AgentRecord>,
    pub planner_step: bool,
    /// Sampled corridor lane and its log-probability on planner steps.
    pub corridor: Option<(usize, f64)>,
    pub reward: f64,
    pub value: f64,
    /// Terminal transition (collision); truncated endings are not terminal.
    pub done: bool,
}

impl Transition {
    /// Packs an act output together with the reward that followed it.
    pub fn from_act(out: ActOutput, reward: f64, done: bool) -> Self {
        let cv_nodes = out.graph.cv_nodes();
        let agents = out
            .agents
            .into_iter()
            .map(|a| {
                let node = out.graph.node_of(a.id).expect("agent is in the global graph");
                AgentRecord {
                    cv_row: cv_nodes.iter().position(|&n| n == node).expect("agent is a CV node"),
                    strategy: a.strategy,
                    strategy_log_prob: a.strategy_log_prob,
                    action: a.action,
                    action_log_prob: a.action_log_prob,
                    ego: a.local.ego_node,
                    local: a.local.graph,
                }
            })
            .collect();
        Self {
            graph: out.graph,
            agents,
            planner_step: out.planner_step,
            corridor: out.corridor_choice,
            reward,
            value: out.value,
            done,
        }
    }
}

/// Transitions grouped into episodes, each closed with a bootstrap value.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    /// `(start, end, bootstrap)` per closed episode.
    episodes: Vec<(usize, usize, f64)>,
    open_from: usize,
}

impl RolloutBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    /// Closes the current episode. `bootstrap` is V(s_T), used when the last
    /// transition is not terminal.
    pub fn end_episode(&mut self, bootstrap: f64) {
        let end = self.transitions.len();
        if end > self.open_from {
            self.episodes.push((self.open_from, end, bootstrap));
        }
        self.open_from = end;
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn episode_count(&self) -> usize {
        self.episodes.len()
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
        self.episodes.clear();
        self.open_from = 0;
    }

    /// Per-episode value arrays, each with its bootstrap entry (0 after a
    /// terminal transition).
    pub fn episode_values(&self) -> Vec<Vec<f64>> {
        self.episodes
            .iter()
            .map(|&(s, e, boot)| {
                let mut v: Vec<f64> = self.transitions[s..e].iter().map(|t| t.value).collect();
                v.push(if self.transitions[e - 1].done { 0.0 } else { boot });
                v
            })
            .collect()
    }

    /// Advantages and value targets for every transition. Advantages are
    /// normalised over the whole buffer when requested.
    pub fn advantages(&self, gamma: f64, lambda: f64, normalise: bool) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.open_from != self.transitions.len() {
            return Err(TrainError::LengthMismatch {
                what: "closed episodes",
                expected: self.transitions.len(),
                got: self.open_from,
            });
        }
        let mut adv = Vec::with_capacity(self.len());
        let mut targets = Vec::with_capacity(self.len());
        for (&(s, e, _), values) in self.episodes.iter().zip(self.episode_values()) {
            let slice = &self.transitions[s..e];
            let rewards: Vec<f64> = slice.iter().map(|t| t.reward).collect();
            let dones: Vec<bool> = slice.iter().map(|t| t.done).collect();
            let (a, t) = compute_gae(&rewards, &values, &dones, gamma, lambda)?;
            adv.extend(a);
            targets.extend(t);
        }
        if normalise {
            normalize(&mut adv);
        }
        Ok((adv, targets))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, GraphConfig};
    use crate::sim::{init_episode, EpisodeConfig};

    fn transition(reward: f64, value: f64, done: bool) -> Transition {
        let world = init_episode(&EpisodeConfig::default()).unwrap();
        Transition {
            graph: build_graph(&world, &GraphConfig::default()),
            agents: Vec::new(),
            planner_step: false,
            corridor: None,
            reward,
            value,
            done,
        }
    }

    #[test]
    fn bootstrap_entries() {
        let mut b = RolloutBuffer::new();
        b.push(transition(1.0, 0.5, false));
        b.push(transition(1.0, 0.5, false));
        b.end_episode(0.0);
        b.push(transition(2.0, 1.0, true));
        b.end_episode(7.0);
        let v = b.episode_values();
        assert_eq!(v, vec![vec![0.5, 0.5, 0.0], vec![1.0, 0.0]]);
        let (adv, _) = b.advantages(0.99, 0.95, false).unwrap();
        assert!((adv[0] - 1.46525).abs() < 1e-12);
        assert_eq!(adv[2], 1.0);
        b.clear();
        assert!(b.is_empty() && b.episode_count() == 0);
    }

    #[test]
    fn open_episode_is_rejected() {
        let mut b = RolloutBuffer::new();
        b.push(transition(1.0, 0.5, false));
        assert!(b.advantages(0.99, 0.95, true).is_err());
    }
}
