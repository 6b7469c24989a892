use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{EpisodeConfig, Result, SimError, VehicleKind, VehicleState, World, EMV_SPAWN_SPEED, EMV_SPAWN_X, MIN_GAP};

/// Per-vehicle resampling budget for the position noise.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 100;

const POSITION_NOISE_SD: f64 = 5.0;
const SPEED_MEAN: f64 = 4.5;
const SPEED_SD: f64 = 1.0;
const SPEED_RANGE: (f64, f64) = (2.0, 7.0);
const LENGTH_MEAN: f64 = 4.5;
const LENGTH_SD: f64 = 1.0;
const LENGTH_RANGE: (f64, f64) = (2.0, 8.0);

/// Rejection-sampled normal restricted to `[lo, hi]`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let normal = Normal::new(mean, sd).expect("finite normal parameters");
    loop {
        let x = normal.sample(rng);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
}

fn fits(placed: &[VehicleState], x: f64, length: f64, lane: usize) -> bool {
    placed.iter().filter(|p| p.lane == lane).all(|p| {
        if p.x >= x {
            p.rear() - x >= MIN_GAP
        } else {
            (x - length) - p.x >= MIN_GAP
        }
    })
}

/// Samples the initial world for `config`.
///
/// Non-EMV vehicles sit at even spacing `L/(count+1)` plus N(0, 5 m) noise,
/// resampled per vehicle until every same-lane gap is at least 2 m. The EMV
/// starts upstream at x = −50 m in lane 0.
pub fn init_episode(config: &EpisodeConfig) -> Result<World> {
    config.validate()?;
    let geometry = &config.geometry;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let count = config.n_vehicles - 1;
    let n_cv = config.cv_count();
    let mut kinds: Vec<VehicleKind> = std::iter::repeat_n(VehicleKind::Cv, n_cv)
        .chain(std::iter::repeat_n(VehicleKind::Hv, count - n_cv))
        .collect();
    kinds.shuffle(&mut rng);

    let mut drafts = Vec::with_capacity(count);
    for _ in 0..count {
        let lane = rng.random_range(0..geometry.lane_count);
        let v = sample_truncated_normal(&mut rng, SPEED_MEAN, SPEED_SD, SPEED_RANGE.0, SPEED_RANGE.1);
        let length = sample_truncated_normal(&mut rng, LENGTH_MEAN, LENGTH_SD, LENGTH_RANGE.0, LENGTH_RANGE.1);
        drafts.push((lane, v, length));
    }

    let mut vehicles = Vec::with_capacity(config.n_vehicles);
    vehicles.push(VehicleState {
        id: 0,
        kind: VehicleKind::Emv,
        x: EMV_SPAWN_X,
        lane: 0,
        v: EMV_SPAWN_SPEED,
        a: 0.0,
        length: config.emv_length,
        desired_speed: config.emv_target_speed,
    });

    let spacing = geometry.length / (count + 1) as f64;
    let noise = Normal::new(0.0, POSITION_NOISE_SD).expect("finite normal parameters");
    for (i, (&kind, &(lane, v, length))) in kinds.iter().zip(&drafts).enumerate() {
        let id = (i + 1) as u32;
        let base = (i + 1) as f64 * spacing;
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let x = base + noise.sample(&mut rng);
            if fits(&vehicles, x, length, lane) {
                placed = Some(x);
                break;
            }
        }
        let x = placed.ok_or(SimError::Placement {
            vehicle: id,
            attempts: MAX_PLACEMENT_ATTEMPTS,
        })?;
        vehicles.push(VehicleState {
            id,
            kind,
            x,
            lane,
            v,
            a: 0.0,
            length,
            desired_speed: v,
        });
    }

    Ok(World::from_parts(config.clone(), vehicles, rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_world() {
        let cfg = EpisodeConfig {
            seed: 7,
            n_vehicles: 12,
            cv_penetration: 0.5,
            ..Default::default()
        };
        let a = init_episode(&cfg).unwrap();
        let b = init_episode(&cfg).unwrap();
        assert_eq!(a.vehicles, b.vehicles);
        assert_eq!(a, b);
    }

    #[test]
    fn emv_spawns_upstream() {
        let w = init_episode(&EpisodeConfig::default()).unwrap();
        let emv = w.emv();
        assert_eq!(emv.x, -50.0);
        assert_eq!(emv.v, 8.0);
        assert_eq!(emv.lane, 0);
        assert_eq!(w.vehicles.iter().filter(|v| v.kind == VehicleKind::Emv).count(), 1);
    }

    #[test]
    fn kind_counts_follow_penetration() {
        for (n, rho, expect_cv) in [(9, 1.0, 8), (10, 0.5, 5), (13, 0.33, 4), (7, 0.0, 0)] {
            let cfg = EpisodeConfig {
                n_vehicles: n,
                cv_penetration: rho,
                seed: 3,
                ..Default::default()
            };
            let w = init_episode(&cfg).unwrap();
            let cvs = w.vehicles.iter().filter(|v| v.kind == VehicleKind::Cv).count();
            let hvs = w.vehicles.iter().filter(|v| v.kind == VehicleKind::Hv).count();
            assert_eq!(cvs, expect_cv);
            assert_eq!(cvs + hvs, n - 1);
        }
    }

    #[test]
    fn initial_gaps_respect_minimum() {
        for seed in 0..200 {
            let cfg = EpisodeConfig {
                n_vehicles: 18,
                seed,
                ..Default::default()
            };
            let w = init_episode(&cfg).unwrap();
            for a in &w.vehicles {
                for b in &w.vehicles {
                    if a.id != b.id && a.lane == b.lane && b.x >= a.x {
                        assert!(b.rear() - a.x >= MIN_GAP - 1e-12, "seed {seed}");
                    }
                }
            }
            for v in &w.vehicles {
                assert!((2.0..=8.0).contains(&v.length));
                if v.kind != VehicleKind::Emv {
                    assert!((2.0..=7.0).contains(&v.v));
                }
            }
        }
    }

    #[test]
    fn overcrowded_road_is_rejected() {
        let cfg = EpisodeConfig {
            n_vehicles: 80,
            geometry: crate::sim::RoadGeometry {
                length: 60.0,
                lane_count: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(matches!(init_episode(&cfg), Err(SimError::Placement { .. })));
    }

    #[test]
    fn truncated_sampler_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hist = [0usize; 10];
        for _ in 0..100_000 {
            let v = sample_truncated_normal(&mut rng, 4.5, 1.0, 2.0, 7.0);
            assert!((2.0..=7.0).contains(&v));
            hist[(((v - 2.0) / 0.5) as usize).min(9)] += 1;
        }
        // Symmetric about 4.5: the two central bins dominate and mirror bins agree.
        assert!(hist[4] > hist[0] * 10);
        let skew = hist[4] as f64 / hist[5] as f64;
        assert!((skew - 1.0).abs() < 0.05, "{hist:?}");
    }
}
