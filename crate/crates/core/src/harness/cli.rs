//! `corridor` command line: `train`, `eval`, `rollout`, `baselines` and
//! `inspect-graph`.
//!
//! [`run`] never exits the process; it returns the exit code (0 success,
//! 1 usage error, 2 runtime failure) so the binary and the tests share it.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::graph::{build_graph, build_local, GraphDump};
use crate::policy::{Policy, PolicyConfig};
use crate::rollout::{run_episode, Driver};
use crate::sim::{init_episode, write_trajectory_csv, EpisodeConfig};
use crate::trainer::{train, ExperimentConfig};

use super::baselines::{default_buckets, load_policy, run_baseline, Bucket, PolicyName};
use super::config::load_config;
use super::manifest::RunManifest;
use super::{HarnessError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "corridor",
    version,
    about = "Emergency-vehicle corridor formation with hierarchical graph MARL"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a policy and write logs, checkpoints and a manifest.
    Train(TrainArgs),
    /// Deterministic paired evaluation of one policy.
    Eval(EvalArgs),
    /// Run one episode and export its trajectory, rewards and attention.
    Rollout(RolloutArgs),
    /// Evaluate a suite of baselines and ablations on shared seeds.
    Baselines(BaselinesArgs),
    /// Print the interaction graph of a scenario at a given step as JSON.
    InspectGraph(InspectArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides `train.total_episodes`.
    #[arg(long)]
    episodes: Option<usize>,
    /// Draws the curriculum stage uniformly instead of by schedule.
    #[arg(long)]
    no_curriculum: bool,
    /// Suppresses progress lines on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Required for network policies.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "trained")]
    policy: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExportFormat {
    Csv,
}

#[derive(Debug, Args)]
struct RolloutArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    export: ExportFormat,
    #[arg(long, default_value = "trained")]
    policy: String,
    /// Output directory; without it the trajectory CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    vehicles: Option<usize>,
    #[arg(long)]
    penetration: Option<f64>,
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Suite {
    Default,
}

#[derive(Debug, Args)]
struct BaselinesArgs {
    #[arg(long, value_enum, default_value = "default")]
    suite: Suite,
    #[arg(long)]
    out: PathBuf,
    /// Checkpoint for the network policies; without it only no-control and
    /// random-cv run.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Separate checkpoint for one variant, as `NAME=PATH`.
    #[arg(long = "variant", value_name = "NAME=PATH")]
    variants: Vec<String>,
    /// Episodes per bucket.
    #[arg(long, default_value_t = 20)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[arg(long)]
    seed: u64,
    /// Steps to simulate without control before dumping.
    #[arg(long, default_value_t = 0)]
    step: u64,
    #[arg(long)]
    vehicles: Option<usize>,
    #[arg(long)]
    penetration: Option<f64>,
    /// Dump the local subgraph of this CV instead of the global graph.
    #[arg(long)]
    local: Option<u32>,
    #[command(flatten)]
    scenario: ScenarioArgs,
}

/// Parses `argv` (program name first) and runs the command, writing normal
/// output to `stdout` and diagnostics to `stderr`.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli.command, &args, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, args: &[String], stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(a, args, stderr),
        Command::Eval(a) => cmd_eval(a, args, stdout),
        Command::Rollout(a) => cmd_rollout(a, args, stdout, stderr),
        Command::Baselines(a) => cmd_baselines(a, args, stdout),
        Command::InspectGraph(a) => cmd_inspect(a, args, stdout, stderr),
    }
}

fn scenario_config(a: &ScenarioArgs) -> Result<ExperimentConfig> {
    match &a.config {
        Some(path) => load_config(path),
        None => Ok(ExperimentConfig::default()),
    }
}

fn network(name: PolicyName, checkpoint: Option<&Path>, config: &PolicyConfig) -> Result<Option<Policy>> {
    match (name.needs_checkpoint(), checkpoint) {
        (false, _) => Ok(None),
        (true, Some(path)) => load_policy(name, config, path).map(Some),
        (true, None) => Err(HarnessError::Usage(format!(
            "--checkpoint is required for policy `{name}`"
        ))),
    }
}

fn cmd_train(a: TrainArgs, args: &[String], stderr: &mut dyn Write) -> Result<()> {
    let mut config = load_config(&a.config)?;
    if let Some(n) = a.episodes {
        config.train.total_episodes = n;
    }
    if a.no_curriculum {
        config.train.curriculum_enabled = false;
    }
    let mut manifest = RunManifest::start("train", args, &config, config.master_seed);
    fs::create_dir_all(&a.out)?;
    let snapshot = a.out.join("config.json");
    fs::write(&snapshot, serde_json::to_string_pretty(&config)? + "\n")?;
    let quiet = a.quiet;
    let outcome = train(&config, Some(&a.out), |row, eval| {
        if let (false, Some(e)) = (quiet, eval) {
            let s = &e.summary;
            let _ = writeln!(
                stderr,
                "episode {} stage {}: eval emv_time {:.2}±{:.2} s, collisions {:.1}%, return {:.1}",
                row.episode, row.stage, s.emv_time_mean, s.emv_time_std, s.collision_rate, s.mean_return
            );
        }
    })?;
    manifest.add_outputs([
        snapshot,
        a.out.join("metrics.csv"),
        a.out.join("eval.csv"),
        a.out.join("policy.bin"),
    ]);
    if config.train.checkpoints {
        manifest.add_outputs(
            outcome
                .evals
                .iter()
                .map(|e| a.out.join(format!("checkpoint_{}.bin", e.episode))),
        );
    }
    manifest.write(&a.out)?;
    Ok(())
}

fn cmd_eval(a: EvalArgs, args: &[String], stdout: &mut dyn Write) -> Result<()> {
    let name: PolicyName = a.policy.parse()?;
    if a.episodes == 0 {
        return Err(HarnessError::Usage("--episodes must be at least 1".into()));
    }
    let config = scenario_config(&a.scenario)?;
    let policy = network(name, a.checkpoint.as_deref(), &config.policy)?;
    let t = &config.train;
    let buckets = [Bucket::new("desk", t.eval_n_range, t.eval_rho_range, a.episodes)];
    let report = run_baseline(name, policy.as_ref(), &config.episode, &config.reward, a.seed, &buckets)?;
    let mut manifest = RunManifest::start("eval", args, &config, a.seed);
    manifest.add_outputs(report.write(&a.out, None)?);
    manifest.write(&a.out)?;
    stdout.write_all(report.table().as_bytes())?;
    Ok(())
}

fn override_scenario(
    base: &EpisodeConfig,
    seed: u64,
    vehicles: Option<usize>,
    penetration: Option<f64>,
) -> Result<EpisodeConfig> {
    let mut c = EpisodeConfig { seed, ..base.clone() };
    if let Some(n) = vehicles {
        c.n_vehicles = n;
    }
    if let Some(r) = penetration {
        c.cv_penetration = r;
    }
    c.validate().map_err(|e| HarnessError::Usage(e.to_string()))?;
    Ok(c)
}

fn cmd_rollout(a: RolloutArgs, args: &[String], stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let ExportFormat::Csv = a.export;
    let name: PolicyName = a.policy.parse()?;
    let config = scenario_config(&a.scenario)?;
    let policy = network(name, a.checkpoint.as_deref(), &config.policy)?;
    let scenario = override_scenario(&config.episode, a.seed, a.vehicles, a.penetration)?;
    let driver = match &policy {
        Some(p) => Driver::Policy {
            policy: p,
            mode: crate::policy::ActMode::Deterministic,
        },
        None if name == PolicyName::RandomCv => Driver::RandomCv,
        None => Driver::NoControl,
    };
    let run = run_episode(&scenario, &config.reward, driver, true)?;
    // Only post-step frames carry a reward breakdown.
    let frames: Vec<_> = run.frames.into_iter().filter(|f| f.reward.is_some()).collect();
    let mut trajectory = Vec::new();
    write_trajectory_csv(&mut trajectory, &frames, true)?;
    let mut manifest = RunManifest::start("rollout", args, &config, a.seed);
    match &a.out {
        None => {
            stdout.write_all(&trajectory)?;
            stderr.write_all(manifest_done(manifest)?.as_bytes())?;
        }
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let tpath = dir.join("trajectory.csv");
            fs::write(&tpath, &trajectory)?;
            let apath = dir.join("attention.csv");
            let mut att = String::from("step,src,dst,weight\n");
            for record in &run.attention {
                for (s, d, w) in &record.edges {
                    att.push_str(&format!("{},{s},{d},{w:.6}\n", record.step));
                }
            }
            fs::write(&apath, att)?;
            let mpath = dir.join("episode.json");
            fs::write(&mpath, serde_json::to_string_pretty(&run.metrics)? + "\n")?;
            manifest.add_outputs([tpath, apath, mpath]);
            manifest.write(dir)?;
        }
    }
    Ok(())
}

fn manifest_done(mut manifest: RunManifest) -> Result<String> {
    manifest.finish();
    manifest.to_json()
}

fn parse_variants(specs: &[String]) -> Result<BTreeMap<String, PathBuf>> {
    let mut map = BTreeMap::new();
    for s in specs {
        let (name, path) = s
            .split_once('=')
            .ok_or_else(|| HarnessError::Usage(format!("--variant expects NAME=PATH, got `{s}`")))?;
        let policy: PolicyName = name.parse()?;
        if !policy.needs_checkpoint() {
            return Err(HarnessError::Usage(format!("policy `{policy}` takes no checkpoint")));
        }
        map.insert(policy.as_str().to_string(), PathBuf::from(path));
    }
    Ok(map)
}

fn cmd_baselines(a: BaselinesArgs, args: &[String], stdout: &mut dyn Write) -> Result<()> {
    let Suite::Default = a.suite;
    if a.episodes == 0 {
        return Err(HarnessError::Usage("--episodes must be at least 1".into()));
    }
    let variants = parse_variants(&a.variants)?;
    let config = scenario_config(&a.scenario)?;
    let buckets = default_buckets(a.episodes);
    let mut manifest = RunManifest::start("baselines", args, &config, a.seed);
    let mut skipped = Vec::new();
    for name in PolicyName::ALL {
        let path = variants.get(name.as_str()).cloned().or_else(|| a.checkpoint.clone());
        let policy = match (name.needs_checkpoint(), path) {
            (false, _) => None,
            (true, Some(p)) => Some(load_policy(name, &config.policy, &p)?),
            (true, None) => {
                skipped.push(name.as_str());
                continue;
            }
        };
        let report = run_baseline(name, policy.as_ref(), &config.episode, &config.reward, a.seed, &buckets)?;
        manifest.add_outputs(report.write(&a.out, Some(name.as_str()))?);
        stdout.write_all(report.table().as_bytes())?;
    }
    if !skipped.is_empty() {
        writeln!(stdout, "skipped without checkpoint: {}", skipped.join(", "))?;
    }
    manifest.write(&a.out)?;
    Ok(())
}

#[derive(Serialize)]
struct Inspection {
    seed: u64,
    step: u64,
    clock: f64,
    #[serde(flatten)]
    graph: GraphDump,
}

fn cmd_inspect(a: InspectArgs, args: &[String], stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let config = scenario_config(&a.scenario)?;
    let scenario = override_scenario(&config.episode, a.seed, a.vehicles, a.penetration)?;
    let mut world = init_episode(&scenario)?;
    let idle = BTreeMap::new();
    while world.t < a.step {
        if world.done().is_some() {
            return Err(HarnessError::Usage(format!(
                "episode ended at step {} before step {}",
                world.t, a.step
            )));
        }
        world.step(&idle)?;
    }
    let graph = match a.local {
        None => build_graph(&world, &config.policy.graph).dump(),
        Some(id) => build_local(&world, id, &config.policy.graph)
            .map_err(|e| HarnessError::Usage(e.to_string()))?
            .graph
            .dump(),
    };
    let out = Inspection {
        seed: a.seed,
        step: world.t,
        clock: world.clock,
        graph,
    };
    stdout.write_all((serde_json::to_string_pretty(&out)? + "\n").as_bytes())?;
    let manifest = RunManifest::start("inspect-graph", args, &config, a.seed);
    stderr.write_all(manifest_done(manifest)?.as_bytes())?;
    Ok(())
}
