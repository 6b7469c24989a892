//! One hierarchical decision: planner strategies, the corridor-lane
//! distribution, controller actions, the critic value and the strongest
//! planner attention edges.
//!
//! ```text
//! cargo run --release --example policy_forward
//! ```

use corridor::policy::{hierarchical_act, ActMode, Policy, PolicyConfig, StrategyCache};
use corridor::sim::{init_episode, EpisodeConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let policy = Policy::new(PolicyConfig::default(), 1);
    println!(
        "policy with {} parameters in {} tensors",
        policy.params.scalar_count(),
        policy.params.len()
    );
    let world = init_episode(&EpisodeConfig {
        n_vehicles: 10,
        cv_penetration: 0.7,
        seed: 4,
        ..Default::default()
    })?;
    let mut cache = StrategyCache::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = hierarchical_act(&world, &policy, &mut cache, &mut rng, ActMode::Stochastic)?;

    println!("planner step: {}, critic value {:.4}", out.planner_step, out.value);
    if let Some(p) = &out.corridor_probs {
        println!("corridor lane probabilities {p:.3?}, chosen {:?}", out.corridor_choice);
    }
    for a in &out.agents {
        println!(
            "CV {:>2}: {:?} (log p {:.3})  mean [{:+.3}, {:+.3}]  sampled [{:+.3}, {:+.3}]  log p {:.3}",
            a.id,
            a.strategy,
            a.strategy_log_prob.unwrap_or(0.0),
            a.mean[0],
            a.mean[1],
            a.action[0],
            a.action[1],
            a.action_log_prob
        );
    }
    if let Some(alpha) = &out.attention {
        let mut edges: Vec<_> = out.graph.edges.iter().zip(alpha).collect();
        edges.sort_by(|x, y| y.1.total_cmp(x.1));
        println!("strongest attention edges:");
        for (&(s, d), w) in edges.iter().take(5) {
            println!("  {} -> {}: {w:.3}", out.graph.node_ids[s], out.graph.node_ids[d]);
        }
    }

    let flat = Policy::new(PolicyConfig::flat(), 1);
    let out = hierarchical_act(
        &world,
        &flat,
        &mut StrategyCache::default(),
        &mut rng,
        ActMode::Deterministic,
    )?;
    println!(
        "flat variant: {} actions, planner ran: {}",
        out.actions.len(),
        out.corridor_probs.is_some()
    );
    Ok(())
}
