use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::graph::NODE_FEATURES;
use crate::sim::A_MAX;

use super::batch::GraphBatch;
use super::gat::{AttentionOptions, GatLayer, HeadCombine};
use super::params::{glorot, Bound, ParamId, ParamStore};
use super::{PolicyConfig, PolicyError, STRATEGY_COUNT};

pub const PLANNER_WIDTHS: [usize; 3] = [64, 128, 128];
pub const CONTROLLER_WIDTHS: [usize; 2] = [32, 64];
pub const CRITIC_WIDTHS: [usize; 3] = [128, 128, 128];
pub const STRATEGY_EMBED: usize = 32;
pub const FUSION_WIDTH: usize = 64;
pub const VALUE_MLP: [usize; 5] = [256, 256, 256, 128, 1];
/// Initial scale of the policy output layers, keeping early actions near the mean.
const HEAD_GAIN: f64 = 0.01;

type Result<T> = std::result::Result<T, PolicyError>;

#[derive(Debug, Clone, PartialEq)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, d_in: usize, d_out: usize, gain: f64) -> Self {
        Self {
            w: store.add(format!("{prefix}.w"), glorot(rng, d_in, d_out, d_in, d_out, gain)),
            b: store.add(format!("{prefix}.b"), Tensor::zeros(1, d_out)),
        }
    }

    fn forward(&self, tape: &Tape<'_>, p: &Bound, x: Var) -> Result<Var> {
        Ok(tape.add_row(tape.matmul(x, p.var(self.w))?, p.var(self.b))?)
    }
}

fn encoder(
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    widths: &[usize],
    heads: usize,
) -> Vec<GatLayer> {
    let mut d_in = NODE_FEATURES;
    widths
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let combine = if i + 1 == widths.len() {
                HeadCombine::Mean
            } else {
                HeadCombine::Concat
            };
            let layer = GatLayer::new(store, rng, &format!("{prefix}.gat{i}"), d_in, w, heads, combine);
            d_in = w;
            layer
        })
        .collect()
}

fn encode(
    layers: &[GatLayer],
    tape: &Tape<'_>,
    p: &Bound,
    batch: &GraphBatch,
    options: AttentionOptions,
) -> Result<(Var, Vec<Var>)> {
    let mut h = tape.constant(batch.x.clone());
    let e = tape.constant(batch.e.clone());
    let mut attention = Vec::with_capacity(layers.len());
    for layer in layers {
        let out = layer.forward(tape, p, h, batch, e, options)?;
        h = out.h;
        attention.push(out.alpha);
    }
    Ok((h, attention))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Planner {
    gat: Vec<GatLayer>,
    strategy: Linear,
    corridor: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    gat: Vec<GatLayer>,
    w_emb: ParamId,
    fusion: Linear,
    accel: Linear,
    lane: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    gat: Vec<GatLayer>,
    mlp: Vec<Linear>,
}

/// Planner outputs over a batch of global graphs.
pub struct PlannerOutput {
    /// Final node embeddings, `N×128`.
    pub h: Var,
    /// Strategy log-probabilities, one row per CV node in `batch.cv_nodes` order.
    pub strategy_log_probs: Var,
    /// Corridor-lane log-probabilities, one row per graph.
    pub corridor_log_probs: Var,
    /// Attention coefficients of each layer, `E×heads`.
    pub attention: Vec<Var>,
}

/// Actor (planner, controller, action noise) and critic parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub config: PolicyConfig,
    pub params: ParamStore,
    planner: Planner,
    controller: Controller,
    critic: Critic,
    pub log_std: ParamId,
    actor_ids: Vec<ParamId>,
    critic_ids: Vec<ParamId>,
}

impl Policy {
    pub fn new(config: PolicyConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();

        let planner = Planner {
            gat: encoder(&mut params, &mut rng, "planner", &PLANNER_WIDTHS, config.planner_heads),
            strategy: Linear::new(
                &mut params,
                &mut rng,
                "planner.strategy",
                PLANNER_WIDTHS[2],
                STRATEGY_COUNT,
                HEAD_GAIN,
            ),
            corridor: Linear::new(
                &mut params,
                &mut rng,
                "planner.corridor",
                PLANNER_WIDTHS[2],
                config.lane_count,
                HEAD_GAIN,
            ),
        };
        let z = CONTROLLER_WIDTHS[1];
        let controller = Controller {
            gat: encoder(
                &mut params,
                &mut rng,
                "controller",
                &CONTROLLER_WIDTHS,
                config.controller_heads,
            ),
            w_emb: params.add(
                "controller.w_emb",
                glorot(
                    &mut rng,
                    STRATEGY_COUNT,
                    STRATEGY_EMBED,
                    STRATEGY_COUNT,
                    STRATEGY_EMBED,
                    1.0,
                ),
            ),
            fusion: Linear::new(
                &mut params,
                &mut rng,
                "controller.fusion",
                z + STRATEGY_EMBED,
                FUSION_WIDTH,
                1.0,
            ),
            accel: Linear::new(&mut params, &mut rng, "controller.accel", FUSION_WIDTH, 1, HEAD_GAIN),
            lane: Linear::new(&mut params, &mut rng, "controller.lane", FUSION_WIDTH, 1, HEAD_GAIN),
        };
        let log_std = params.add("log_std", Tensor::row(vec![config.init_log_std; 2]));
        let actor_count = params.len();

        let critic = Critic {
            gat: encoder(&mut params, &mut rng, "critic", &CRITIC_WIDTHS, config.critic_heads),
            mlp: VALUE_MLP
                .windows(2)
                .enumerate()
                .map(|(i, w)| Linear::new(&mut params, &mut rng, &format!("critic.mlp{i}"), w[0], w[1], 1.0))
                .collect(),
        };

        let ids: Vec<ParamId> = params.ids().collect();
        Self {
            config,
            planner,
            controller,
            critic,
            log_std,
            actor_ids: ids[..actor_count].to_vec(),
            critic_ids: ids[actor_count..].to_vec(),
            params,
        }
    }

    pub fn actor_ids(&self) -> &[ParamId] {
        &self.actor_ids
    }

    pub fn critic_ids(&self) -> &[ParamId] {
        &self.critic_ids
    }

    fn attention_options(&self) -> AttentionOptions {
        AttentionOptions {
            uniform: self.config.uniform_attention,
        }
    }

    /// Builds a batch honouring the edge-feature ablation.
    pub fn batch(&self, graphs: &[&crate::graph::TrafficGraph]) -> Result<GraphBatch> {
        GraphBatch::new(graphs, self.config.edge_features)
    }

    pub fn planner_forward(&self, tape: &Tape<'_>, p: &Bound, batch: &GraphBatch) -> Result<PlannerOutput> {
        let (h, attention) = encode(&self.planner.gat, tape, p, batch, self.attention_options())?;
        let cv_h = tape.gather_rows(h, batch.cv_nodes.clone())?;
        let logits = self.planner.strategy.forward(tape, p, cv_h)?;
        let strategy_log_probs = tape.log_softmax_rows(logits);

        let inv = tape.constant(batch.inverse_sizes());
        let pooled = tape.segment_sum(tape.mul_col(h, inv)?, batch.node_graph.clone(), batch.graph_count())?;
        let corridor_log_probs = tape.log_softmax_rows(self.planner.corridor.forward(tape, p, pooled)?);
        Ok(PlannerOutput {
            h,
            strategy_log_probs,
            corridor_log_probs,
            attention,
        })
    }

    /// Mean actions `[accel, lane_offset]`, one row per ego in `egos` (batch
    /// node indices). `strategies` is `egos.len()×4` (one-hot, or zeros in
    /// flat mode).
    pub fn controller_forward(
        &self,
        tape: &Tape<'_>,
        p: &Bound,
        batch: &GraphBatch,
        egos: Rc<[usize]>,
        strategies: Tensor,
    ) -> Result<Var> {
        let (h, _) = encode(&self.controller.gat, tape, p, batch, self.attention_options())?;
        let z = tape.gather_rows(h, egos)?;
        let s = tape.matmul(tape.constant(strategies), p.var(self.controller.w_emb))?;
        let f = tape.relu(self.controller.fusion.forward(tape, p, tape.concat(&[z, s], 1)?)?);
        let a = self.controller.accel.forward(tape, p, f)?;
        let l = self.controller.lane.forward(tape, p, f)?;
        let raw = tape.tanh(tape.concat(&[a, l], 1)?);
        Ok(tape.mul_row(raw, tape.constant(Tensor::row(vec![A_MAX, 1.0])))?)
    }

    /// State values, one row per graph.
    pub fn critic_forward(&self, tape: &Tape<'_>, p: &Bound, batch: &GraphBatch) -> Result<Var> {
        let (h, _) = encode(&self.critic.gat, tape, p, batch, self.attention_options())?;
        let inv = tape.constant(batch.inverse_sizes());
        let mean = tape.segment_sum(tape.mul_col(h, inv)?, batch.node_graph.clone(), batch.graph_count())?;
        let max = tape.segment_max(h, batch.node_graph.clone(), batch.graph_count())?;
        let mut g = tape.concat(&[mean, max], 1)?;
        let last = self.critic.mlp.len() - 1;
        for (i, layer) in self.critic.mlp.iter().enumerate() {
            g = layer.forward(tape, p, g)?;
            if i < last {
                g = tape.relu(g);
            }
        }
        Ok(g)
    }

    /// Output-layer parameter ids, exposed for tests and diagnostics.
    pub fn head_ids(&self) -> HeadIds {
        HeadIds {
            strategy_w: self.planner.strategy.w,
            accel_w: self.controller.accel.w,
            accel_b: self.controller.accel.b,
            lane_w: self.controller.lane.w,
            lane_b: self.controller.lane.b,
            value_w: self.critic.mlp[self.critic.mlp.len() - 1].w,
            value_b: self.critic.mlp[self.critic.mlp.len() - 1].b,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeadIds {
    pub strategy_w: ParamId,
    pub accel_w: ParamId,
    pub accel_b: ParamId,
    pub lane_w: ParamId,
    pub lane_b: ParamId,
    pub value_w: ParamId,
    pub value_b: ParamId,
}
