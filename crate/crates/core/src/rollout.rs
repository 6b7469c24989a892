//! Episode runner shared by evaluation, baselines and trajectory export.
//!
//! A [`Driver`] decides the CV actions each step; [`run_episode`] steps the
//! world to completion and reduces the trace to [`EpisodeMetrics`].

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::metrics::{corridor_time, emv_travel_time, traffic_efficiency, EpisodeMetrics, EpisodeTrace};
use crate::policy::{hierarchical_act, ActMode, Policy, PolicyError, StrategyCache};
use crate::reward::{compute_reward, RewardConfig, RewardError};
use crate::rng::{derive_seed, tags};
use crate::sim::{init_episode, CvAction, EpisodeConfig, SimError, TrajectoryFrame, TrajectoryRecorder, World, A_MAX};

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Who controls the connected vehicles.
#[derive(Debug, Clone, Copy)]
pub enum Driver<'a> {
    /// Empty action map every step, so CVs drive like HVs.
    NoControl,
    /// Actions drawn uniformly from the action bounds.
    RandomCv,
    Policy {
        policy: &'a Policy,
        mode: ActMode,
    },
}

impl Driver<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Driver::NoControl => "no-control",
            Driver::RandomCv => "random-cv",
            Driver::Policy { .. } => "policy",
        }
    }
}

/// Planner attention over the global graph at one planner step, keyed by
/// vehicle ids.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub step: u64,
    /// `(source id, destination id, head-averaged weight)`.
    pub edges: Vec<(u32, u32, f64)>,
}

#[derive(Debug, Clone)]
pub struct EpisodeRun {
    pub metrics: EpisodeMetrics,
    pub trace: EpisodeTrace,
    /// Per-step snapshots; empty unless recording was requested.
    pub frames: Vec<TrajectoryFrame>,
    pub attention: Vec<AttentionRecord>,
}

/// FNV-1a over the vehicle states, used to confirm that paired evaluations
/// start from identical worlds.
pub fn world_hash(world: &World) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for v in &world.vehicles {
        feed(&v.id.to_le_bytes());
        feed(v.kind.as_str().as_bytes());
        feed(&(v.lane as u64).to_le_bytes());
        for f in [v.x, v.v, v.a, v.length, v.desired_speed] {
            feed(&f.to_bits().to_le_bytes());
        }
    }
    h
}

/// Reduces a finished trace to per-episode metrics.
pub fn episode_metrics(
    config: &EpisodeConfig,
    reward: &RewardConfig,
    trace: &EpisodeTrace,
    world: &World,
    total_return: f64,
    world_hash: u64,
) -> EpisodeMetrics {
    let geometry = &config.geometry;
    let horizon = config.max_steps as f64 * geometry.dt;
    let travel = emv_travel_time(trace, geometry.length, horizon);
    EpisodeMetrics {
        seed: config.seed,
        n_vehicles: config.n_vehicles,
        n_cv: config.cv_count(),
        emv_time: travel.seconds,
        censored: travel.censored,
        corridor_time: corridor_time(trace),
        efficiency: traffic_efficiency(trace, geometry.length, reward.v_normal),
        collisions: world.events.len(),
        total_return,
        steps: world.t,
        done: world.done().unwrap_or(crate::sim::DoneReason::Timeout),
        world_hash,
    }
}

fn random_actions(world: &World, rng: &mut ChaCha8Rng) -> BTreeMap<u32, CvAction> {
    world
        .cv_ids()
        .into_iter()
        .map(|id| {
            (
                id,
                CvAction::new(rng.random_range(-A_MAX..=A_MAX), rng.random_range(-1.0..=1.0)),
            )
        })
        .collect()
}

/// Runs one episode to completion. The driver's random stream is derived
/// from the episode seed, so a `(config, driver)` pair always replays the
/// same episode.
pub fn run_episode(
    config: &EpisodeConfig,
    reward: &RewardConfig,
    driver: Driver<'_>,
    record: bool,
) -> Result<EpisodeRun, RolloutError> {
    let mut world = init_episode(config)?;
    let hash = world_hash(&world);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, tags::POLICY, 0));
    let mut cache = StrategyCache::default();
    let mut trace = EpisodeTrace::default();
    let mut recorder = TrajectoryRecorder::new();
    let mut attention = Vec::new();
    let mut total_return = 0.0;

    trace.observe(&world, reward);
    if record {
        recorder.record(&world, None);
    }
    while world.done().is_none() {
        let actions = match driver {
            Driver::NoControl => BTreeMap::new(),
            Driver::RandomCv => random_actions(&world, &mut rng),
            Driver::Policy { policy, mode } => {
                let out = hierarchical_act(&world, policy, &mut cache, &mut rng, mode)?;
                if let (true, Some(alpha)) = (record, &out.attention) {
                    let ids = &out.graph.node_ids;
                    attention.push(AttentionRecord {
                        step: world.t,
                        edges: out
                            .graph
                            .edges
                            .iter()
                            .zip(alpha)
                            .map(|(&(s, d), &a)| (ids[s], ids[d], a))
                            .collect(),
                    });
                }
                out.actions
            }
        };
        let events = world.step(&actions)?;
        let r = compute_reward(&world, &actions, &events, reward)?;
        total_return += r.total;
        trace.observe(&world, reward);
        if record {
            recorder.record(&world, Some(r));
        }
    }
    Ok(EpisodeRun {
        metrics: episode_metrics(config, reward, &trace, &world, total_return, hash),
        trace,
        frames: recorder.frames,
        attention,
    })
}

/// Deterministic scenario list for paired evaluation: vehicle count and
/// penetration are drawn uniformly from the given ranges, one seed per
/// scenario, all derived from `master_seed`.
pub fn paired_scenarios(
    base: &EpisodeConfig,
    master_seed: u64,
    count: usize,
    n_range: (usize, usize),
    rho_range: (f64, f64),
) -> Vec<EpisodeConfig> {
    (0..count as u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master_seed, tags::EVAL, i));
            EpisodeConfig {
                n_vehicles: rng.random_range(n_range.0..=n_range.1),
                cv_penetration: if rho_range.0 < rho_range.1 {
                    rng.random_range(rho_range.0..=rho_range.1)
                } else {
                    rho_range.0
                },
                seed: rng.random(),
                stage: 0,
                ..base.clone()
            }
        })
        .collect()
}

/// Runs every scenario with the same driver.
pub fn evaluate(
    scenarios: &[EpisodeConfig],
    reward: &RewardConfig,
    driver: Driver<'_>,
) -> Result<Vec<EpisodeMetrics>, RolloutError> {
    scenarios
        .iter()
        .map(|c| run_episode(c, reward, driver, false).map(|r| r.metrics))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyConfig;

    #[test]
    fn paired_scenarios_give_identical_worlds() {
        let base = EpisodeConfig::default();
        let a = paired_scenarios(&base, 11, 8, (6, 12), (0.5, 1.0));
        let b = paired_scenarios(&base, 11, 8, (6, 12), (0.5, 1.0));
        assert_eq!(a, b);
        let reward = RewardConfig::default();
        let none = evaluate(&a, &reward, Driver::NoControl).unwrap();
        let rand = evaluate(&a, &reward, Driver::RandomCv).unwrap();
        for (x, y) in none.iter().zip(&rand) {
            assert_eq!(x.world_hash, y.world_hash);
        }
        assert!(none.windows(2).any(|w| w[0].world_hash != w[1].world_hash));
    }

    #[test]
    fn episodes_replay_identically() {
        let policy = Policy::new(PolicyConfig::default(), 3);
        let config = EpisodeConfig {
            n_vehicles: 8,
            seed: 5,
            ..Default::default()
        };
        let reward = RewardConfig::default();
        let driver = Driver::Policy {
            policy: &policy,
            mode: ActMode::Stochastic,
        };
        let a = run_episode(&config, &reward, driver, true).unwrap();
        let b = run_episode(&config, &reward, driver, true).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.frames.len() as u64, a.metrics.steps + 1);
        assert!(!a.attention.is_empty());
    }

    #[test]
    fn no_control_exits_or_is_censored() {
        let reward = RewardConfig::default();
        for seed in 0..5 {
            let config = EpisodeConfig {
                seed,
                ..Default::default()
            };
            let m = run_episode(&config, &reward, Driver::NoControl, false).unwrap().metrics;
            assert_eq!(m.censored, m.done != crate::sim::DoneReason::Success);
            assert!(m.emv_time > 0.0 && m.emv_time <= 60.0);
        }
    }
}
