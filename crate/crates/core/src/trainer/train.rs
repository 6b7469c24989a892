//! The full training loop: curriculum sampling, hierarchical rollouts,
//! periodic updates, deterministic evaluation and checkpointing.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::graph::build_graph;
use crate::metrics::{summarize, EpisodeTrace, Summary};
use crate::policy::checkpoint::write_checkpoint;
use crate::policy::{hierarchical_act, ActMode, Policy, PolicyConfig, StrategyCache};
use crate::reward::{compute_reward, RewardConfig};
use crate::rng::{derive_seed, stream, tags};
use crate::rollout::{episode_metrics, evaluate, paired_scenarios, world_hash, Driver};
use crate::sim::{init_episode, DoneReason, EpisodeConfig, World};

use super::buffer::{RolloutBuffer, Transition};
use super::curriculum::{curriculum_sample, CurriculumSchedule};
use super::update::{update, Optimizers, UpdateStats};
use super::{Result, TrainConfig, TrainError};

/// Everything a run depends on besides the output location.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub train: TrainConfig,
    /// Base scenario; vehicle count, penetration and seed are overridden per
    /// episode.
    pub episode: EpisodeConfig,
    pub reward: RewardConfig,
    pub policy: PolicyConfig,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub stage: usize,
    /// Undiscounted team return of the episode.
    pub mean_return: f64,
    pub emv_time: f64,
    pub corridor_time: Option<f64>,
    pub collisions: usize,
    /// Update statistics, present on episodes that triggered an update.
    pub update: Option<UpdateStats>,
}

pub const METRICS_HEADER: &str =
    "episode,stage,mean_return,emv_time,corridor_time,collisions,actor_loss,critic_loss,entropy,clip_frac";

impl MetricsRow {
    pub fn csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let u = self.update.as_ref();
        format!(
            "{},{},{:.6},{:.6},{},{},{},{},{},{}",
            self.episode,
            self.stage,
            self.mean_return,
            self.emv_time,
            opt(self.corridor_time),
            self.collisions,
            opt(u.map(|u| u.actor_loss)),
            opt(u.map(|u| u.critic_loss)),
            opt(u.map(|u| u.entropy)),
            opt(u.map(|u| u.clip_frac)),
        )
    }
}

/// Deterministic evaluation after `episode` training episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub episode: usize,
    pub summary: Summary,
}

pub const EVAL_HEADER: &str =
    "episode,emv_time_mean,emv_time_std,collision_rate,efficiency_mean,corridor_time_mean,mean_return";

impl EvalPoint {
    pub fn csv(&self) -> String {
        let s = &self.summary;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        format!(
            "{},{:.6},{:.6},{:.6},{},{},{:.6}",
            self.episode,
            s.emv_time_mean,
            s.emv_time_std,
            s.collision_rate,
            opt(s.efficiency_mean),
            opt(s.corridor_time_mean),
            s.mean_return
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub rows: Vec<MetricsRow>,
    pub evals: Vec<EvalPoint>,
}

impl TrainOutcome {
    /// First evaluation whose mean return reaches 90% of the final one's
    /// (measured from the first evaluation), if any.
    pub fn ninety_percent_episode(&self) -> Option<usize> {
        let first = self.evals.first()?.summary.mean_return;
        let last = self.evals.last()?.summary.mean_return;
        let goal = first + 0.9 * (last - first);
        self.evals
            .iter()
            .find(|e| {
                if last >= first {
                    e.summary.mean_return >= goal
                } else {
                    e.summary.mean_return <= goal
                }
            })
            .map(|e| e.episode)
    }
}

/// Critic estimate of a world state.
pub fn state_value(policy: &Policy, world: &World) -> Result<f64> {
    let graph = build_graph(world, &policy.config.graph);
    let tape = Tape::new();
    let p = policy.params.bind(&tape);
    let v = policy.critic_forward(&tape, &p, &policy.batch(&[&graph])?)?;
    Ok(tape.scalar(v))
}

/// Scenario for 1-based `episode` of a run.
pub fn episode_config(experiment: &ExperimentConfig, schedule: &CurriculumSchedule, episode: usize) -> EpisodeConfig {
    let mut rng = stream(experiment.master_seed, tags::CURRICULUM, episode as u64);
    let mut config = curriculum_sample(episode, schedule, &experiment.episode, &mut rng);
    config.seed = derive_seed(experiment.master_seed, tags::EPISODE, episode as u64);
    config
}

/// Scenarios used for the periodic evaluations.
pub fn eval_scenarios(experiment: &ExperimentConfig) -> Vec<EpisodeConfig> {
    let t = &experiment.train;
    paired_scenarios(
        &experiment.episode,
        experiment.master_seed,
        t.eval_episodes,
        t.eval_n_range,
        t.eval_rho_range,
    )
}

/// Collects one stochastic episode into `buffer`.
pub fn collect_episode(
    experiment: &ExperimentConfig,
    policy: &Policy,
    config: &EpisodeConfig,
    episode: usize,
    buffer: &mut RolloutBuffer,
) -> Result<MetricsRow> {
    let mut world = init_episode(config)?;
    let hash = world_hash(&world);
    let mut rng = stream(experiment.master_seed, tags::POLICY, episode as u64);
    let mut cache = StrategyCache::default();
    let mut trace = EpisodeTrace::default();
    let mut total = 0.0;
    trace.observe(&world, &experiment.reward);
    let mut terminal = false;
    while world.done().is_none() {
        let out = hierarchical_act(&world, policy, &mut cache, &mut rng, ActMode::Stochastic)?;
        let events = world.step(&out.actions)?;
        let r = compute_reward(&world, &out.actions, &events, &experiment.reward)
            .map_err(crate::rollout::RolloutError::from)?;
        total += r.total;
        terminal = world.done() == Some(DoneReason::Collision);
        buffer.push(Transition::from_act(out, r.total, terminal));
        trace.observe(&world, &experiment.reward);
    }
    let bootstrap = if terminal { 0.0 } else { state_value(policy, &world)? };
    buffer.end_episode(bootstrap);
    let m = episode_metrics(config, &experiment.reward, &trace, &world, total, hash);
    Ok(MetricsRow {
        episode,
        stage: config.stage,
        mean_return: total,
        emv_time: m.emv_time,
        corridor_time: m.corridor_time,
        collisions: m.collisions,
        update: None,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

/// Trains from scratch. With `out_dir`, writes `metrics.csv`, `eval.csv` and
/// checkpoints (`checkpoint_<episode>.bin`, plus `policy.bin` for the final
/// parameters). `progress` is called after every episode.
pub fn train(
    experiment: &ExperimentConfig,
    out_dir: Option<&Path>,
    mut progress: impl FnMut(&MetricsRow, Option<&EvalPoint>),
) -> Result<TrainOutcome> {
    let config = &experiment.train;
    config.validate()?;
    experiment.episode.validate()?;
    let schedule = CurriculumSchedule::new(config.schedule, config.total_episodes, config.curriculum_enabled);
    schedule.validate()?;

    let mut policy = Policy::new(
        experiment.policy.clone(),
        derive_seed(experiment.master_seed, tags::INIT, 0),
    );
    let mut optimizers = Optimizers::new(config);
    let mut shuffle = stream(experiment.master_seed, tags::SHUFFLE, 0);
    let scenarios = eval_scenarios(experiment);

    let mut metrics_log = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut w = BufWriter::new(File::create(dir.join("metrics.csv"))?);
            writeln!(w, "{METRICS_HEADER}")?;
            let mut e = BufWriter::new(File::create(dir.join("eval.csv"))?);
            writeln!(e, "{EVAL_HEADER}")?;
            Some((w, e))
        }
        None => None,
    };

    let mut buffer = RolloutBuffer::new();
    let mut rows = Vec::with_capacity(config.total_episodes);
    let mut evals = Vec::new();
    for episode in 1..=config.total_episodes {
        let scenario = episode_config(experiment, &schedule, episode);
        let mut row = collect_episode(experiment, &policy, &scenario, episode, &mut buffer)?;
        if buffer.len() >= config.batch_size {
            row.update = Some(update(&mut policy, &mut optimizers, &mut buffer, config, &mut shuffle)?);
        }
        let eval = if episode % config.eval_every == 0 || episode == config.total_episodes {
            let driver = Driver::Policy {
                policy: &policy,
                mode: ActMode::Deterministic,
            };
            let results = evaluate(&scenarios, &experiment.reward, driver)?;
            Some(EvalPoint {
                episode,
                summary: summarize(&results),
            })
        } else {
            None
        };
        if let Some((w, e)) = metrics_log.as_mut() {
            writeln!(w, "{}", row.csv())?;
            if let Some(point) = &eval {
                writeln!(e, "{}", point.csv())?;
                w.flush()?;
                e.flush()?;
                if config.checkpoints {
                    let dir = out_dir.expect("log implies directory");
                    let mut bytes = Vec::new();
                    write_checkpoint(&mut bytes, &policy)?;
                    write_atomic(&dir.join(format!("checkpoint_{episode}.bin")), &bytes)?;
                }
            }
        }
        progress(&row, eval.as_ref());
        rows.push(row);
        if let Some(point) = eval {
            evals.push(point);
        }
    }
    if let (Some(dir), Some((mut w, mut e))) = (out_dir, metrics_log) {
        w.flush()?;
        e.flush()?;
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &policy)?;
        write_atomic(&dir.join("policy.bin"), &bytes)?;
    }
    if rows.len() != config.total_episodes {
        return Err(TrainError::LengthMismatch {
            what: "metrics rows",
            expected: config.total_episodes,
            got: rows.len(),
        });
    }
    Ok(TrainOutcome { policy, rows, evals })
}
