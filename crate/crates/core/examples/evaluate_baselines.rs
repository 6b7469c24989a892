//! Paired evaluation of the baseline suite. With a checkpoint path, the
//! trained policy and its ablation variants are evaluated too.
//!
//! ```text
//! cargo run --release --example evaluate_baselines -- [checkpoint] [episodes]
//! ```

use std::path::PathBuf;

use corridor::harness::{load_policy, run_baseline, Bucket, PolicyName};
use corridor::policy::PolicyConfig;
use corridor::reward::RewardConfig;
use corridor::sim::EpisodeConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let checkpoint = std::env::args().nth(1).map(PathBuf::from);
    let episodes = std::env::args().nth(2).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let buckets = [
        Bucket::new("dense", (10, 12), (0.5, 1.0), episodes),
        Bucket::new("sparse", (6, 8), (0.5, 1.0), episodes),
    ];
    let base = EpisodeConfig::default();
    let reward = RewardConfig::default();

    let mut hashes = None;
    for name in PolicyName::ALL {
        let policy = match (name.needs_checkpoint(), &checkpoint) {
            (false, _) => None,
            (true, Some(path)) => Some(load_policy(name, &PolicyConfig::default(), path)?),
            (true, None) => continue,
        };
        let report = run_baseline(name, policy.as_ref(), &base, &reward, 2024, &buckets)?;
        let h: Vec<u64> = report.buckets.iter().flat_map(|b| b.world_hashes.clone()).collect();
        assert_eq!(hashes.get_or_insert_with(|| h.clone()), &h, "paired seeds diverged");
        print!("{}", report.table());
    }
    if checkpoint.is_none() {
        println!("pass a checkpoint (e.g. from train_desk) to evaluate the network variants");
    }
    Ok(())
}
