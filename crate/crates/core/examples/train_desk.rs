//! Desk-scale training on the stage-1-weighted schedule, followed by a
//! paired comparison against uncontrolled traffic.
//!
//! ```text
//! cargo run --release --example train_desk -- [episodes] [out_dir] [flat]
//! ```
//!
//! 1500 episodes take roughly a quarter of an hour on one core.

use std::path::PathBuf;
use std::time::Instant;

use corridor::harness::{run_baseline, Bucket, PolicyName};
use corridor::policy::PolicyConfig;
use corridor::trainer::{train, ExperimentConfig, ScheduleKind, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let episodes = args.next().map(|s| s.parse()).transpose()?.unwrap_or(300);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("corridor_desk"));
    let flat = args.next().as_deref() == Some("flat");

    let experiment = ExperimentConfig {
        master_seed: 1,
        train: TrainConfig {
            total_episodes: episodes,
            schedule: ScheduleKind::Desk,
            ..Default::default()
        },
        policy: if flat {
            PolicyConfig::flat()
        } else {
            PolicyConfig::default()
        },
        ..Default::default()
    };
    let start = Instant::now();
    let outcome = train(&experiment, Some(&out), |row, eval| {
        if let Some(e) = eval {
            println!(
                "episode {:>5} ({:>4.0} s): eval emv_time {:.2} s, collisions {:.1}%, return {:.1}",
                row.episode,
                start.elapsed().as_secs_f64(),
                e.summary.emv_time_mean,
                e.summary.collision_rate,
                e.summary.mean_return
            );
        }
    })?;
    println!("logs and checkpoints in {}", out.display());
    if let Some(ep) = outcome.ninety_percent_episode() {
        println!("90% of final evaluation return first reached at episode {ep}");
    }

    let buckets = [Bucket::new("desk", (6, 12), (0.5, 1.0), 50)];
    let trained = if flat { PolicyName::GnnFlat } else { PolicyName::Trained };
    for (name, policy) in [(PolicyName::NoControl, None), (trained, Some(&outcome.policy))] {
        let report = run_baseline(name, policy, &experiment.episode, &experiment.reward, 12345, &buckets)?;
        print!("{}", report.table());
    }
    Ok(())
}
