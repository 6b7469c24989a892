mod common;

use std::collections::BTreeMap;

use corridor::reward::{compute_reward, count_blocking, RewardConfig};
use corridor::sim::{init_episode, CvAction, EpisodeConfig, StepEvents};
use proptest::prelude::*;

use common::{arb_vehicles, arb_world, n_block_oracle};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn n_block_matches_brute_force(vehicles in arb_vehicles(18), range in 10.0..80.0f64, lane in 0usize..2) {
        let config = RewardConfig { corridor_range: range, corridor_lane: lane, ..Default::default() };
        prop_assert_eq!(count_blocking(&vehicles, &vehicles[0], &config), n_block_oracle(&vehicles, lane, range));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn total_is_linear_in_weights(world in arb_world(18), scale in -4.0..4.0f64, accel in -4.0..4.0f64) {
        let actions: BTreeMap<u32, CvAction> = world.cv_ids().into_iter().map(|id| (id, CvAction::new(accel, 0.0))).collect();
        let events = StepEvents::default();
        let base = RewardConfig::default();
        let scaled = RewardConfig { weights: base.weights.map(|w| w * scale), ..base.clone() };
        let doubled = RewardConfig { weights: base.weights.map(|w| w * 2.0), ..base.clone() };
        let r = compute_reward(&world, &actions, &events, &base).unwrap();
        let s = compute_reward(&world, &actions, &events, &scaled).unwrap();
        let d = compute_reward(&world, &actions, &events, &doubled).unwrap();
        prop_assert_eq!(d.total, 2.0 * r.total);
        let recomputed: f64 = s.components().iter().zip(&scaled.weights).map(|(c, w)| c * w).sum();
        prop_assert_eq!(s.total, recomputed);
        prop_assert!((s.total - scale * r.total).abs() <= 1e-12 * (1.0 + r.total.abs() * scale.abs()));
    }

    #[test]
    fn zero_accelerations_cost_nothing(world in arb_world(18)) {
        let actions: BTreeMap<u32, CvAction> = world.cv_ids().into_iter().map(|id| (id, CvAction::new(0.0, 0.7))).collect();
        let r = compute_reward(&world, &actions, &StepEvents::default(), &RewardConfig::default()).unwrap();
        prop_assert_eq!(r.r5, 0.0);
    }
}

#[test]
fn collision_free_episodes_never_pay_the_penalty() {
    let reward = RewardConfig::default();
    let idle = BTreeMap::new();
    let mut checked = 0;
    for seed in 0..40 {
        let mut world = init_episode(&EpisodeConfig {
            n_vehicles: 12,
            seed,
            ..Default::default()
        })
        .unwrap();
        let mut r3 = Vec::new();
        while world.done().is_none() {
            let events = world.step(&idle).unwrap();
            r3.push(compute_reward(&world, &idle, &events, &reward).unwrap().r3);
        }
        if world.events.is_empty() {
            checked += 1;
            assert!(r3.iter().all(|&x| x == 0.0), "seed {seed}");
        }
    }
    assert!(checked > 0);
}
