//! The PPO update: K epochs of shuffled minibatches over the rollout buffer.
//!
//! Every (transition, CV) pair is one actor entry. Its log-probability is the
//! Gaussian action log-density plus, on planner steps, the log-probability of
//! the sampled strategy. All entries of a transition share the transition's
//! team advantage. Minibatches are split into chunks that each get their own
//! tape; chunk losses are pre-scaled so the accumulated gradients equal those
//! of the whole minibatch.

use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{clip_global_norm, Adam, AdamConfig, Tape, Tensor, Var};
use crate::graph::TrafficGraph;
use crate::policy::act::strategy_inputs;
use crate::policy::dist::{categorical_entropy_tape, gaussian_entropy_tape, gaussian_log_prob_tape};
use crate::policy::{Bound, Policy, Strategy};

use super::buffer::RolloutBuffer;
use super::losses::{surrogate_tape, value_loss_tape};
use super::{Result, TrainConfig};

/// Separate Adam states for the actor and the critic.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizers {
    pub actor: Adam,
    pub critic: Adam,
}

impl Optimizers {
    pub fn new(config: &TrainConfig) -> Self {
        Self {
            actor: Adam::new(AdamConfig::with_lr(config.actor_lr)),
            critic: Adam::new(AdamConfig::with_lr(config.critic_lr)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub transitions: usize,
    pub minibatches: usize,
    /// Minibatches dropped because a loss or gradient was not finite.
    pub skipped: usize,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub mean_ratio: f64,
    pub explained_variance: f64,
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
}

/// Losses and gradients of one minibatch at the current parameters.
#[derive(Debug, Clone)]
pub struct MinibatchEval {
    pub entries: usize,
    /// Surrogate part of the actor loss, without the entropy bonus.
    pub surrogate_loss: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub mean_ratio: f64,
    pub actor_grads: Vec<Tensor>,
    pub critic_grads: Vec<Tensor>,
}

/// Inputs shared by every minibatch of one update.
pub struct UpdateTargets<'a> {
    pub buffer: &'a RolloutBuffer,
    pub advantages: &'a [f64],
    pub targets: &'a [f64],
}

struct ChunkTerms {
    loss: Var,
    surrogate: f64,
    entropy: f64,
    critic: f64,
    clipped: usize,
    ratio_sum: f64,
}

#[allow(clippy::too_many_arguments)]
fn chunk_terms(
    tape: &Tape<'_>,
    p: &Bound,
    policy: &Policy,
    data: &UpdateTargets<'_>,
    chunk: &[usize],
    config: &TrainConfig,
    total_entries: usize,
    total_transitions: usize,
) -> Result<ChunkTerms> {
    let transitions: Vec<_> = chunk.iter().map(|&i| &data.buffer.transitions[i]).collect();

    let graphs: Vec<&TrafficGraph> = transitions.iter().map(|t| &t.graph).collect();
    let values = policy.critic_forward(tape, p, &policy.batch(&graphs)?)?;
    let v_old: Vec<f64> = transitions.iter().map(|t| t.value).collect();
    let targets: Vec<f64> = chunk.iter().map(|&i| data.targets[i]).collect();
    let v_loss = tape.sum_all(value_loss_tape(tape, values, &v_old, &targets, config.value_clip)?);
    let critic = tape.scalar(v_loss);
    let loss = tape.scale(v_loss, 1.0 / total_transitions as f64);

    let hierarchical = policy.config.hierarchical;
    let mut locals = Vec::new();
    let mut egos = Vec::new();
    let mut strategies = Vec::new();
    let mut actions = Vec::new();
    let mut lp_old = Vec::new();
    let mut adv = Vec::new();
    // Planner bookkeeping: per strategy row, its entry and chosen strategy;
    // per planner-step entry, its planner graph.
    let mut planner_graphs = Vec::new();
    let mut corridor_lanes = Vec::new();
    let mut row_entry = Vec::new();
    let mut row_strategy = Vec::new();
    let mut corridor_entry = Vec::new();
    let mut corridor_graph = Vec::new();
    for (t, &i) in transitions.iter().zip(chunk) {
        let plans = hierarchical && t.planner_step;
        let mut rows = vec![(0, Strategy::default()); if plans { t.graph.cv_nodes().len() } else { 0 }];
        for a in &t.agents {
            let entry = lp_old.len();
            let mut old = a.action_log_prob;
            if plans {
                old += a.strategy_log_prob.unwrap_or(0.0);
                rows[a.cv_row] = (entry, a.strategy);
                if config.corridor_in_objective {
                    if let Some((_, lp)) = t.corridor {
                        old += lp;
                        corridor_entry.push(entry);
                        corridor_graph.push(planner_graphs.len());
                    }
                }
            }
            locals.push(&a.local);
            egos.push(a.ego);
            strategies.push(a.strategy);
            actions.extend(a.action);
            lp_old.push(old);
            adv.push(data.advantages[i]);
        }
        if plans {
            planner_graphs.push(&t.graph);
            corridor_lanes.push(t.corridor.map_or(0, |c| c.0));
            for (entry, s) in rows {
                row_entry.push(entry);
                row_strategy.push(s.index());
            }
        }
    }

    let entries = lp_old.len();
    let mut terms = ChunkTerms {
        loss,
        surrogate: 0.0,
        entropy: 0.0,
        critic,
        clipped: 0,
        ratio_sum: 0.0,
    };
    if entries == 0 {
        return Ok(terms);
    }

    let batch = policy.batch(&locals)?;
    let ego_index: Rc<[usize]> = egos.iter().zip(&batch.offsets).map(|(e, o)| o + e).collect();
    let means = policy.controller_forward(tape, p, &batch, ego_index, strategy_inputs(policy, &strategies))?;
    let log_std = p.var(policy.log_std);
    let mut lp_new = gaussian_log_prob_tape(tape, means, log_std, Tensor::new(entries, 2, actions)?)?;
    let mut entropy = tape.scale(gaussian_entropy_tape(tape, log_std), entries as f64);

    if !planner_graphs.is_empty() {
        let out = policy.planner_forward(tape, p, &policy.batch(&planner_graphs)?)?;
        let chosen = tape.select_per_row(out.strategy_log_probs, row_strategy.into())?;
        lp_new = tape.add(lp_new, tape.segment_sum(chosen, row_entry.into(), entries)?)?;
        let h = tape.sum_all(categorical_entropy_tape(tape, out.strategy_log_probs)?);
        entropy = tape.add(entropy, h)?;
        if !corridor_entry.is_empty() {
            let lanes = tape.select_per_row(out.corridor_log_probs, corridor_lanes.into())?;
            let per_entry = tape.gather_rows(lanes, corridor_graph.into())?;
            lp_new = tape.add(lp_new, tape.segment_sum(per_entry, corridor_entry.into(), entries)?)?;
        }
    }

    let surrogate = tape.sum_all(surrogate_tape(tape, lp_new, &lp_old, &adv, config.clip_eps)?);
    let scale = 1.0 / total_entries as f64;
    let actor = tape.add(
        tape.scale(surrogate, -scale),
        tape.scale(entropy, -config.entropy_coef * scale),
    )?;
    terms.loss = tape.add(terms.loss, actor)?;
    terms.surrogate = -tape.scalar(surrogate);
    terms.entropy = tape.scalar(entropy);
    let new = tape.value(lp_new);
    for (n, o) in new.data.iter().zip(&lp_old) {
        let r = (n - o).exp();
        terms.ratio_sum += r;
        if (r - 1.0).abs() > config.clip_eps {
            terms.clipped += 1;
        }
    }
    Ok(terms)
}

/// Evaluates losses, statistics and gradients for the transitions `idx`.
pub fn evaluate_minibatch(
    policy: &Policy,
    data: &UpdateTargets<'_>,
    idx: &[usize],
    config: &TrainConfig,
) -> Result<MinibatchEval> {
    let entries: usize = idx.iter().map(|&i| data.buffer.transitions[i].agents.len()).sum();
    let zeros = |ids: &[crate::policy::ParamId]| -> Vec<Tensor> {
        ids.iter()
            .map(|&id| {
                let t = policy.params.get(id);
                Tensor::zeros(t.rows, t.cols)
            })
            .collect()
    };
    let mut eval = MinibatchEval {
        entries,
        surrogate_loss: 0.0,
        actor_loss: 0.0,
        critic_loss: 0.0,
        entropy: 0.0,
        clip_frac: 0.0,
        mean_ratio: 0.0,
        actor_grads: zeros(policy.actor_ids()),
        critic_grads: zeros(policy.critic_ids()),
    };
    let mut clipped = 0;
    let mut ratio_sum = 0.0;
    for chunk in idx.chunks(config.chunk_size) {
        let tape = Tape::new();
        let p = policy.params.bind(&tape);
        let terms = chunk_terms(&tape, &p, policy, data, chunk, config, entries.max(1), idx.len())?;
        tape.backward(terms.loss)?;
        for (acc, g) in eval
            .actor_grads
            .iter_mut()
            .zip(p.grads(&tape, &policy.params, policy.actor_ids()))
        {
            acc.data.iter_mut().zip(&g.data).for_each(|(a, b)| *a += b);
        }
        for (acc, g) in eval
            .critic_grads
            .iter_mut()
            .zip(p.grads(&tape, &policy.params, policy.critic_ids()))
        {
            acc.data.iter_mut().zip(&g.data).for_each(|(a, b)| *a += b);
        }
        eval.surrogate_loss += terms.surrogate;
        eval.entropy += terms.entropy;
        eval.critic_loss += terms.critic;
        clipped += terms.clipped;
        ratio_sum += terms.ratio_sum;
    }
    eval.critic_loss /= idx.len().max(1) as f64;
    if entries > 0 {
        eval.surrogate_loss /= entries as f64;
        eval.entropy /= entries as f64;
        eval.clip_frac = clipped as f64 / entries as f64;
        eval.mean_ratio = ratio_sum / entries as f64;
    }
    eval.actor_loss = eval.surrogate_loss - config.entropy_coef * eval.entropy;
    Ok(eval)
}

/// `1 − Var(targets − values) / Var(targets)`.
pub fn explained_variance(values: &[f64], targets: &[f64]) -> f64 {
    let var = |xs: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = xs.collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    };
    let vt = var(&mut targets.iter().copied());
    if vt == 0.0 {
        return 0.0;
    }
    1.0 - var(&mut targets.iter().zip(values).map(|(t, v)| t - v)) / vt
}

/// Runs K epochs of minibatch updates and clears the buffer.
pub fn update<R: Rng + ?Sized>(
    policy: &mut Policy,
    optimizers: &mut Optimizers,
    buffer: &mut RolloutBuffer,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    let (advantages, targets) = buffer.advantages(config.gamma, config.lambda, config.normalize_advantages)?;
    let values: Vec<f64> = buffer.transitions.iter().map(|t| t.value).collect();
    let mut stats = UpdateStats {
        transitions: buffer.len(),
        explained_variance: explained_variance(&values, &targets),
        ..Default::default()
    };
    let actor_ids = policy.actor_ids().to_vec();
    let critic_ids = policy.critic_ids().to_vec();
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for idx in order.chunks(config.minibatch_size) {
            let data = UpdateTargets {
                buffer,
                advantages: &advantages,
                targets: &targets,
            };
            let mut eval = evaluate_minibatch(policy, &data, idx, config)?;
            if !(eval.actor_loss.is_finite() && eval.critic_loss.is_finite()) {
                stats.skipped += 1;
                continue;
            }
            let norms = (
                clip_global_norm(&mut eval.actor_grads, config.max_grad_norm),
                clip_global_norm(&mut eval.critic_grads, config.max_grad_norm),
            );
            let (Ok(actor_norm), Ok(critic_norm)) = norms else {
                stats.skipped += 1;
                continue;
            };
            optimizers
                .actor
                .step(&mut policy.params.many_mut(&actor_ids), &eval.actor_grads)?;
            optimizers
                .critic
                .step(&mut policy.params.many_mut(&critic_ids), &eval.critic_grads)?;
            stats.minibatches += 1;
            stats.actor_loss += eval.actor_loss;
            stats.critic_loss += eval.critic_loss;
            stats.entropy += eval.entropy;
            stats.clip_frac += eval.clip_frac;
            stats.mean_ratio += eval.mean_ratio;
            stats.actor_grad_norm += actor_norm;
            stats.critic_grad_norm += critic_norm;
        }
    }
    if stats.minibatches > 0 {
        let n = stats.minibatches as f64;
        for f in [
            &mut stats.actor_loss,
            &mut stats.critic_loss,
            &mut stats.entropy,
            &mut stats.clip_frac,
            &mut stats.mean_ratio,
            &mut stats.actor_grad_norm,
            &mut stats.critic_grad_norm,
        ] {
            *f /= n;
        }
    }
    buffer.clear();
    Ok(stats)
}
