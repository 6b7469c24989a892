//! Saves a policy, reloads it into a fresh network and confirms that both
//! the bytes and the evaluation results are unchanged.
//!
//! ```text
//! cargo run --release --example checkpoint_roundtrip
//! ```

use corridor::policy::{checkpoint, ActMode, Policy, PolicyConfig};
use corridor::reward::RewardConfig;
use corridor::rollout::{evaluate, paired_scenarios, Driver};
use corridor::sim::EpisodeConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("corridor_checkpoint_example");
    std::fs::create_dir_all(&dir)?;
    let first = dir.join("a.bin");
    let second = dir.join("b.bin");

    let policy = Policy::new(PolicyConfig::default(), 42);
    checkpoint::save(&first, &policy)?;
    let mut reloaded = Policy::new(PolicyConfig::default(), 0);
    checkpoint::load(&first, &mut reloaded)?;
    checkpoint::save(&second, &reloaded)?;
    let (a, b) = (std::fs::read(&first)?, std::fs::read(&second)?);
    println!("checkpoint {} bytes, save-load-save identical: {}", a.len(), a == b);

    let scenarios = paired_scenarios(&EpisodeConfig::default(), 9, 5, (6, 12), (0.5, 1.0));
    let reward = RewardConfig::default();
    let run = |p: &Policy| {
        evaluate(
            &scenarios,
            &reward,
            Driver::Policy {
                policy: p,
                mode: ActMode::Deterministic,
            },
        )
    };
    let (x, y) = (run(&policy)?, run(&reloaded)?);
    for (m, n) in x.iter().zip(&y) {
        println!("seed {:>20}: emv_time {:.4} vs {:.4}", m.seed, m.emv_time, n.emv_time);
    }
    println!("evaluations identical: {}", x == y);

    let mut wrong = Policy::new(
        PolicyConfig {
            planner_heads: 2,
            ..Default::default()
        },
        0,
    );
    match checkpoint::load(&first, &mut wrong) {
        Ok(()) => println!("unexpectedly loaded into a mismatched network"),
        Err(e) => println!("mismatched network rejected: {e}"),
    }
    Ok(())
}
