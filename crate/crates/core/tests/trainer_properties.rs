mod common;

use corridor::autodiff::{Tape, Tensor};
use corridor::policy::{Policy, PolicyConfig};
use corridor::sim::EpisodeConfig;
use corridor::trainer::losses::surrogate_tape;
use corridor::trainer::train::collect_episode;
use corridor::trainer::{
    compute_gae, normalize, ppo_actor_loss, update, CurriculumSchedule, ExperimentConfig, Optimizers, RolloutBuffer,
    ScheduleKind, TrainConfig,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::gae_oracle;

fn episode() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<bool>)> {
    (1usize..=64).prop_flat_map(|n| {
        (
            prop::collection::vec(-10.0..10.0f64, n),
            prop::collection::vec(-20.0..20.0f64, n + 1),
            prop::collection::vec(prop::bool::weighted(0.1), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gae_matches_double_sum((r, v, d) in episode(), gamma in 0.0..0.999f64, lambda in 0.0..=1.0f64) {
        let (adv, targets) = compute_gae(&r, &v, &d, gamma, lambda).unwrap();
        for (t, (a, o)) in adv.iter().zip(gae_oracle(&r, &v, &d, gamma, lambda)).enumerate() {
            prop_assert!((a - o).abs() < 1e-10, "t={} {} vs {}", t, a, o);
            prop_assert!((targets[t] - (a + v[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn normalised_advantages_are_standard(mut x in prop::collection::vec(-1e3..1e3f64, 2..300)) {
        let spread = x.iter().cloned().fold(f64::MIN, f64::max) - x.iter().cloned().fold(f64::MAX, f64::min);
        prop_assume!(spread > 1e-6);
        normalize(&mut x);
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() < 1e-10);
        prop_assert!((std - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unbounded_clip_gives_plain_surrogate(
        rows in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, -5.0..5.0f64), 1..50),
    ) {
        let new: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let old: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let adv: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let plain = -rows.iter().map(|(n, o, a)| (n - o).exp() * a).sum::<f64>() / rows.len() as f64;
        let loss = ppo_actor_loss(&new, &old, &adv, f64::INFINITY, 0.0, &[]).unwrap();
        prop_assert!((loss - plain).abs() <= 1e-12 * (1.0 + plain.abs()));
        let tape = Tape::new();
        let lp = tape.leaf(Tensor::column(new.clone()), false);
        let s = tape.mean_all(surrogate_tape(&tape, lp, &old, &adv, 1e300).unwrap());
        prop_assert!((-tape.scalar(s) - plain).abs() <= 1e-12 * (1.0 + plain.abs()));
    }

    #[test]
    fn stages_partition_the_run(total in 1usize..20_000, desk: bool, enabled: bool) {
        let kind = if desk { ScheduleKind::Desk } else { ScheduleKind::Paper };
        let s = CurriculumSchedule::new(kind, total, enabled);
        s.validate().unwrap();
        prop_assert_eq!(s.stages.first().unwrap().first, 1);
        prop_assert_eq!(s.stages.last().unwrap().last, total);
        for w in s.stages.windows(2) {
            prop_assert_eq!(w[0].last + 1, w[1].first);
        }
        let covered: usize = s.stages.iter().map(|st| st.last - st.first + 1).sum();
        prop_assert_eq!(covered, total);
        for (k, st) in s.stages.iter().enumerate() {
            prop_assert_eq!(s.stage_index(st.first), k);
            prop_assert_eq!(s.stage_index(st.last), k);
        }
    }
}

#[test]
fn buffer_is_empty_after_every_update() {
    let experiment = ExperimentConfig::default();
    let mut policy = Policy::new(PolicyConfig::default(), 4);
    let config = TrainConfig {
        minibatch_size: 32,
        epochs: 2,
        ..Default::default()
    };
    let mut opt = Optimizers::new(&config);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for round in 0..2 {
        let mut buffer = RolloutBuffer::new();
        for ep in 1..=2 {
            let scenario = EpisodeConfig {
                n_vehicles: 7,
                seed: 10 * round + ep as u64,
                max_steps: 25,
                ..Default::default()
            };
            collect_episode(&experiment, &policy, &scenario, ep, &mut buffer).unwrap();
        }
        assert!(!buffer.is_empty());
        let stats = update(&mut policy, &mut opt, &mut buffer, &config, &mut rng).unwrap();
        assert_eq!(buffer.len(), 0);
        assert_eq!(buffer.episode_count(), 0);
        assert!(stats.minibatches > 0);
    }
}
