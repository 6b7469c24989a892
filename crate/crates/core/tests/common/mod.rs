//! Generators and reference oracles shared by the integration suites.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use corridor::autodiff::{Tape, Tensor};
use corridor::graph::{build_graph, EdgeType, GraphConfig, TrafficGraph};
use corridor::policy::{Policy, PolicyConfig, STRATEGY_COUNT};
use corridor::sim::{init_episode, EpisodeConfig, RoadGeometry, VehicleKind, VehicleState, World};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn vehicle(id: u32, kind: VehicleKind, x: f64, lane: usize, v: f64) -> VehicleState {
    VehicleState {
        id,
        kind,
        x,
        lane,
        v,
        a: 0.0,
        length: if kind == VehicleKind::Emv { 6.0 } else { 4.5 },
        desired_speed: v.max(1.0),
    }
}

/// Arbitrary vehicle sets: id 0 is the EMV, the rest are CVs or HVs placed
/// anywhere on a two-lane road, overlaps allowed.
pub fn arb_vehicles(max: usize) -> impl Strategy<Value = Vec<VehicleState>> {
    prop::collection::vec(
        (any::<bool>(), -60.0..220.0f64, 0..2usize, 0.0..13.0f64, -2.0..2.0f64),
        1..max,
    )
    .prop_flat_map(|rest| {
        (-60.0..100.0f64, 0.0..12.0f64).prop_map(move |(ex, ev)| {
            let mut out = vec![vehicle(0, VehicleKind::Emv, ex, 0, ev)];
            for (i, &(cv, x, lane, v, a)) in rest.iter().enumerate() {
                let kind = if cv { VehicleKind::Cv } else { VehicleKind::Hv };
                let mut veh = vehicle(i as u32 + 1, kind, x, lane, v);
                veh.a = a;
                out.push(veh);
            }
            out
        })
    })
}

/// Worlds with at least one CV, built from non-overlapping vehicles.
pub fn arb_world(max: usize) -> impl Strategy<Value = World> {
    (2..=max, 0u64..1_000_000).prop_map(|(n, seed)| {
        let config = EpisodeConfig {
            n_vehicles: n,
            cv_penetration: 1.0,
            seed,
            ..Default::default()
        };
        init_episode(&config).expect("scenario fits on the road")
    })
}

/// Same distribution as [`arb_vehicles`], drawn from a plain RNG.
pub fn random_vehicles(rng: &mut ChaCha8Rng, max: usize) -> Vec<VehicleState> {
    let mut out = vec![vehicle(
        0,
        VehicleKind::Emv,
        rng.random_range(-60.0..100.0),
        0,
        rng.random_range(0.0..12.0),
    )];
    for i in 1..rng.random_range(2..=max) {
        let kind = if rng.random() { VehicleKind::Cv } else { VehicleKind::Hv };
        let mut v = vehicle(
            i as u32,
            kind,
            rng.random_range(-60.0..220.0),
            rng.random_range(0..2),
            rng.random_range(0.0..13.0),
        );
        v.a = rng.random_range(-2.0..2.0);
        out.push(v);
    }
    out
}

/// All-pairs collision oracle: a same-lane pair collides when no vehicle of
/// that lane sits strictly between them in (x, id) order and the leader's
/// rear is behind the follower's front.
pub fn collision_oracle(vehicles: &[VehicleState]) -> BTreeSet<(u32, u32)> {
    let key = |v: &VehicleState| (v.x, v.id);
    let before = |a: &VehicleState, b: &VehicleState| key(a).0 < key(b).0 || (key(a).0 == key(b).0 && a.id < b.id);
    let mut out = BTreeSet::new();
    for f in vehicles {
        for l in vehicles {
            if f.id == l.id || f.lane != l.lane || !before(f, l) {
                continue;
            }
            let between = vehicles
                .iter()
                .any(|k| k.lane == f.lane && k.id != f.id && k.id != l.id && before(f, k) && before(k, l));
            if !between && l.x - l.length - f.x < 0.0 {
                out.insert((f.id, l.id));
            }
        }
    }
    out
}

/// Edge set straight from the generator definitions, by vehicle id.
pub fn edge_oracle(vehicles: &[VehicleState], g: &RoadGeometry, c: &GraphConfig) -> BTreeMap<(u32, u32), EdgeType> {
    let mut out = BTreeMap::new();
    for a in vehicles {
        for b in vehicles {
            let t = if a.id == b.id {
                if !c.self_loops {
                    continue;
                }
                EdgeType::SelfLoop
            } else if a.kind == VehicleKind::Emv || b.kind == VehicleKind::Emv {
                EdgeType::Emv
            } else if (a.lane as i64 - b.lane as i64).abs() <= 1 && (a.x - b.x).abs() < c.lane_window {
                EdgeType::Lane
            } else if (a.x - b.x).hypot((a.lane as f64 - b.lane as f64) * g.lane_width) < c.d_max {
                EdgeType::Proximity
            } else {
                continue;
            };
            out.insert((a.id, b.id), t);
        }
    }
    out
}

/// Vehicles other than the EMV in `lane`, strictly ahead of it and at most
/// `range` metres in front.
pub fn n_block_oracle(vehicles: &[VehicleState], lane: usize, range: f64) -> usize {
    let emv = vehicles.iter().find(|v| v.kind == VehicleKind::Emv).unwrap();
    let mut count = 0;
    for v in vehicles {
        if v.kind != VehicleKind::Emv && v.lane == lane && v.x > emv.x && v.x <= emv.x + range {
            count += 1;
        }
    }
    count
}

/// Truncated double sum `A_t = Σ_l (γλ)^l δ_{t+l}`, stopping after the first
/// terminal transition.
pub fn gae_oracle(r: &[f64], v: &[f64], d: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for l in 0..n - t {
                let k = t + l;
                let next = if d[k] { 0.0 } else { v[k + 1] };
                let delta = r[k] + gamma * next - v[k];
                sum += (gamma * lambda).powi(l as i32) * delta;
                if d[k] {
                    break;
                }
            }
            sum
        })
        .collect()
}

struct Outputs {
    /// Strategy log-probabilities keyed by vehicle id.
    strategies: Vec<(u32, Vec<f64>)>,
    /// Controller means keyed by vehicle id.
    means: Vec<(u32, Vec<f64>)>,
    value: f64,
}

fn outputs(policy: &Policy, g: &TrafficGraph) -> Outputs {
    let batch = policy.batch(&[g]).unwrap();
    let tape = Tape::new();
    let p = policy.params.bind(&tape);
    let planner = policy.planner_forward(&tape, &p, &batch).unwrap();
    let lp = tape.value(planner.strategy_log_probs);
    let cv = g.cv_nodes();
    let strategies = cv
        .iter()
        .enumerate()
        .map(|(r, &node)| {
            (
                g.node_ids[node],
                lp.data[r * STRATEGY_COUNT..(r + 1) * STRATEGY_COUNT].to_vec(),
            )
        })
        .collect();
    // Strategy inputs depend only on the vehicle id, so they travel with it.
    let mut one_hot = Tensor::zeros(cv.len(), STRATEGY_COUNT);
    for (r, &node) in cv.iter().enumerate() {
        one_hot.data[r * STRATEGY_COUNT + g.node_ids[node] as usize % STRATEGY_COUNT] = 1.0;
    }
    let egos: Rc<[usize]> = cv.clone().into();
    let m = tape.value(policy.controller_forward(&tape, &p, &batch, egos, one_hot).unwrap());
    let means = cv
        .iter()
        .enumerate()
        .map(|(r, &node)| (g.node_ids[node], m.data[2 * r..2 * r + 2].to_vec()))
        .collect();
    let value = tape.scalar(policy.critic_forward(&tape, &p, &batch).unwrap());
    let mut out = Outputs {
        strategies,
        means,
        value,
    };
    out.strategies.sort_by_key(|x| x.0);
    out.means.sort_by_key(|x| x.0);
    out
}

fn max_gap(a: &[(u32, Vec<f64>)], b: &[(u32, Vec<f64>)]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|((ia, xa), (ib, xb))| {
            assert_eq!(ia, ib);
            xa.iter().zip(xb).map(|(x, y)| (x - y).abs())
        })
        .fold(0.0, f64::max)
}

/// Largest change of per-vehicle planner/controller rows and of the critic
/// value when the nodes of `graphs` random scenario graphs are shuffled.
pub fn permutation_gaps(config: PolicyConfig, graphs: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let policy = Policy::new(config, 17);
    let (mut worst_rows, mut worst_value) = (0.0f64, 0.0f64);
    let mut tested = 0;
    while tested < graphs {
        let scenario = EpisodeConfig {
            n_vehicles: rng.random_range(2..=18),
            cv_penetration: rng.random_range(0.3..=1.0),
            seed: rng.random(),
            ..Default::default()
        };
        let world = init_episode(&scenario).unwrap();
        if world.cv_ids().is_empty() {
            continue;
        }
        let g = build_graph(&world, &policy.config.graph);
        let mut perm: Vec<usize> = (0..g.node_count()).collect();
        perm.shuffle(rng);
        let a = outputs(&policy, &g);
        let b = outputs(&policy, &g.permuted(&perm));
        worst_rows = worst_rows
            .max(max_gap(&a.strategies, &b.strategies))
            .max(max_gap(&a.means, &b.means));
        worst_value = worst_value.max((a.value - b.value).abs());
        tested += 1;
    }
    (worst_rows, worst_value)
}
