//! Runs one scenario with uncontrolled and randomly controlled CVs and
//! prints the EMV's progress and the episode metrics.
//!
//! ```text
//! cargo run --release --example simulate_episode -- [vehicles] [penetration] [seed]
//! ```

use std::collections::BTreeMap;

use corridor::reward::{compute_reward, count_blocking, RewardConfig};
use corridor::rollout::{run_episode, Driver};
use corridor::sim::{init_episode, EpisodeConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let config = EpisodeConfig {
        n_vehicles: args.first().map(|s| s.parse()).transpose()?.unwrap_or(10),
        cv_penetration: args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(0.8),
        seed: args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(7),
        ..Default::default()
    };
    let reward = RewardConfig::default();

    let mut world = init_episode(&config)?;
    println!(
        "initial world ({} vehicles, {} CVs):",
        world.vehicles.len(),
        config.cv_count()
    );
    for v in &world.vehicles {
        println!(
            "  {:>2} {:<3} lane {} x {:>7.2} m  v {:>5.2} m/s",
            v.id,
            v.kind.as_str(),
            v.lane,
            v.x,
            v.v
        );
    }

    println!("\nstep  clock   emv_x   emv_v  n_block  reward");
    let idle = BTreeMap::new();
    while world.done().is_none() {
        let events = world.step(&idle)?;
        let r = compute_reward(&world, &idle, &events, &reward)?;
        if world.t % 10 == 0 {
            let emv = world.emv();
            let blocking = count_blocking(&world.vehicles, emv, &reward);
            println!(
                "{:>4} {:>6.1} {:>7.2} {:>7.2} {:>8} {:>7.3}",
                world.t, world.clock, emv.x, emv.v, blocking, r.total
            );
        }
    }
    println!("done: {:?} after {} steps", world.done().unwrap(), world.t);

    for driver in [Driver::NoControl, Driver::RandomCv] {
        let m = run_episode(&config, &reward, driver, false)?.metrics;
        println!(
            "\n{:<10} emv_time {:.2} s{}  corridor {:?}  efficiency {:?}  collisions {}  return {:.1}",
            driver.name(),
            m.emv_time,
            if m.censored { " (censored)" } else { "" },
            m.corridor_time,
            m.efficiency,
            m.collisions,
            m.total_return
        );
    }
    Ok(())
}
