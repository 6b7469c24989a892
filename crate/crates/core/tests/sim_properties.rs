mod common;

use std::collections::{BTreeMap, BTreeSet};

use corridor::sim::{detect_collisions, init_episode, CvAction, EpisodeConfig, A_MAX};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{arb_vehicles, collision_oracle};

fn random_actions(ids: &[u32], rng: &mut ChaCha8Rng) -> BTreeMap<u32, CvAction> {
    ids.iter()
        .map(|&id| {
            (
                id,
                CvAction::new(rng.random_range(-6.0..6.0), rng.random_range(-1.5..1.5)),
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn collisions_match_all_pairs_oracle(vehicles in arb_vehicles(18)) {
        let found: BTreeSet<(u32, u32)> = detect_collisions(&vehicles, 2, 0)
            .iter()
            .map(|e| (e.follower_id, e.leader_id))
            .collect();
        prop_assert_eq!(found, collision_oracle(&vehicles));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rollouts_respect_bounds_and_replay(n in 2usize..=18, rho in 0.0..=1.0f64, seed in 0u64..10_000, action_seed: u64) {
        let config = EpisodeConfig { n_vehicles: n, cv_penetration: rho, seed, ..Default::default() };
        let run = || {
            let mut world = init_episode(&config).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(action_seed);
            let mut states = vec![world.vehicles.clone()];
            let mut per_step = Vec::new();
            while world.done().is_none() {
                let actions = random_actions(&world.cv_ids(), &mut rng);
                let before = world.events.clone();
                let events = world.step(&actions).unwrap();
                assert_eq!(&world.events[..before.len()], &before[..], "event log rewritten");
                per_step.extend(events.collisions.clone());
                states.push(world.vehicles.clone());
            }
            assert_eq!(world.events, per_step, "event log differs from per-step events");
            (states, world.events.clone())
        };
        let (a, events) = run();
        let (b, _) = run();
        prop_assert_eq!(&a, &b);
        let limit = config.geometry.speed_limit;
        for state in &a {
            for v in state {
                prop_assert!(v.v >= 0.0 && v.v <= limit + 1e-12, "speed {} of {}", v.v, v.id);
                prop_assert!(v.lane < config.geometry.lane_count);
                prop_assert!(v.a.abs() <= A_MAX.max(limit / config.geometry.dt) + 1e-9);
                if v.id == 0 {
                    prop_assert!(v.v <= config.emv_target_speed + 1e-12);
                }
            }
        }
        prop_assert!(events.windows(2).all(|w| w[0].step <= w[1].step));
    }
}
