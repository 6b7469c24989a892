//! Shared team reward: EMV progress, corridor clearance, safety, background
//! traffic efficiency and control smoothness, combined by a weight vector.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{CvAction, StepEvents, VehicleKind, VehicleState, World};

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("reward requires an emergency vehicle in the world")]
    MissingEmv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub weights: [f64; 5],
    pub v_max_emv: f64,
    pub n_max: f64,
    pub corridor_lane: usize,
    pub corridor_range: f64,
    pub v_normal: f64,
    pub collision_penalty: f64,
    pub smoothness_coeff: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            weights: [5.0, 2.0, 1.0, 0.5, 0.2],
            v_max_emv: 12.0,
            n_max: 5.0,
            corridor_lane: 0,
            corridor_range: 50.0,
            v_normal: 4.5,
            collision_penalty: -10.0,
            smoothness_coeff: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub r5: f64,
    pub total: f64,
    pub n_block: usize,
}

impl RewardBreakdown {
    pub fn components(&self) -> [f64; 5] {
        [self.r1, self.r2, self.r3, self.r4, self.r5]
    }
}

/// Non-EMV vehicles in the corridor lane strictly ahead of the EMV and at
/// most `corridor_range` metres in front of it.
pub fn count_blocking(vehicles: &[VehicleState], emv: &VehicleState, config: &RewardConfig) -> usize {
    vehicles
        .iter()
        .filter(|v| v.kind != VehicleKind::Emv && v.lane == config.corridor_lane)
        .filter(|v| {
            let ahead = v.x - emv.x;
            ahead > 0.0 && ahead <= config.corridor_range
        })
        .count()
}

/// Mean speed over the CVs present, `None` when there are none.
pub fn mean_cv_speed(vehicles: &[VehicleState]) -> Option<f64> {
    let (sum, n) = vehicles
        .iter()
        .filter(|v| v.kind == VehicleKind::Cv)
        .fold((0.0, 0usize), |(s, n), v| (s + v.v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Reward for the transition that produced `world`.
///
/// `actions` are the commanded CV actions of this step (their clamped
/// accelerations feed the smoothness term); `events` tells whether any
/// collision happened. The penalty applies once per step.
pub fn compute_reward(
    world: &World,
    actions: &BTreeMap<u32, CvAction>,
    events: &StepEvents,
    config: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    let emv = world
        .vehicles
        .iter()
        .find(|v| v.kind == VehicleKind::Emv)
        .ok_or(RewardError::MissingEmv)?;
    let n_block = count_blocking(&world.vehicles, emv, config);

    let r1 = emv.v / config.v_max_emv;
    let r2 = 1.0 - n_block as f64 / config.n_max;
    let r3 = if events.collisions.is_empty() {
        0.0
    } else {
        config.collision_penalty
    };
    let r4 = mean_cv_speed(&world.vehicles).map_or(0.0, |v| v / config.v_normal);
    let r5 = if actions.is_empty() {
        0.0
    } else {
        let mean_abs = actions.values().map(|a| a.clamped().accel.abs()).sum::<f64>() / actions.len() as f64;
        -config.smoothness_coeff * mean_abs
    };
    Ok(combine([r1, r2, r3, r4, r5], n_block, &config.weights))
}

/// Weighted sum of the five components.
pub fn combine(r: [f64; 5], n_block: usize, weights: &[f64; 5]) -> RewardBreakdown {
    let total = r.iter().zip(weights).map(|(r, w)| r * w).sum();
    RewardBreakdown {
        r1: r[0],
        r2: r[1],
        r3: r[2],
        r4: r[3],
        r5: r[4],
        total,
        n_block,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{CollisionEvent, EpisodeConfig};

    fn vehicle(id: u32, kind: VehicleKind, x: f64, lane: usize, v: f64) -> VehicleState {
        VehicleState {
            id,
            kind,
            x,
            lane,
            v,
            a: 0.0,
            length: 4.5,
            desired_speed: v,
        }
    }

    fn world(vehicles: Vec<VehicleState>) -> World {
        World::from_vehicles(EpisodeConfig::default(), vehicles, 0).unwrap()
    }

    #[test]
    fn anchor_case_totals_seven_and_a_half() {
        let w = world(vec![
            vehicle(0, VehicleKind::Emv, 20.0, 0, 12.0),
            vehicle(1, VehicleKind::Cv, 30.0, 1, 4.5),
            vehicle(2, VehicleKind::Cv, 90.0, 0, 4.5),
        ]);
        let mut actions = BTreeMap::new();
        actions.insert(1, CvAction::new(0.0, 0.0));
        actions.insert(2, CvAction::new(0.0, 0.0));
        let r = compute_reward(&w, &actions, &StepEvents::default(), &RewardConfig::default()).unwrap();
        assert_eq!(r.n_block, 0);
        assert_eq!(r.total, 7.5);
    }

    #[test]
    fn composite_case() {
        let w = world(vec![
            vehicle(0, VehicleKind::Emv, 0.0, 0, 6.0),
            vehicle(1, VehicleKind::Cv, 10.0, 0, 4.0),
            vehicle(2, VehicleKind::Hv, 50.0, 0, 4.0),
            vehicle(3, VehicleKind::Cv, 60.0, 0, 5.0),
            vehicle(4, VehicleKind::Hv, 20.0, 1, 4.0),
        ]);
        let mut actions = BTreeMap::new();
        actions.insert(1, CvAction::new(2.0, 0.0));
        actions.insert(3, CvAction::new(-4.0, 0.0));
        let events = StepEvents {
            collisions: vec![CollisionEvent {
                step: 1,
                follower_id: 1,
                leader_id: 2,
                lane: 0,
            }],
            ..Default::default()
        };
        let r = compute_reward(&w, &actions, &events, &RewardConfig::default()).unwrap();
        assert_eq!(r.n_block, 2);
        assert!((r.total - (-5.86)).abs() < 1e-12, "{}", r.total);
    }

    #[test]
    fn five_blockers_zero_corridor_term_and_more_go_negative() {
        let mut vs = vec![vehicle(0, VehicleKind::Emv, 0.0, 0, 6.0)];
        for i in 1..=5 {
            vs.push(vehicle(i, VehicleKind::Hv, 8.0 * i as f64, 0, 4.0));
        }
        let r = compute_reward(
            &world(vs.clone()),
            &BTreeMap::new(),
            &StepEvents::default(),
            &RewardConfig::default(),
        )
        .unwrap();
        assert_eq!(r.r2, 0.0);
        vs.push(vehicle(6, VehicleKind::Hv, 49.0, 0, 4.0));
        let r = compute_reward(
            &world(vs),
            &BTreeMap::new(),
            &StepEvents::default(),
            &RewardConfig::default(),
        )
        .unwrap();
        assert!((r.r2 - (-0.2)).abs() < 1e-12);
    }

    #[test]
    fn no_cvs_zero_efficiency_and_smoothness() {
        let w = world(vec![
            vehicle(0, VehicleKind::Emv, 0.0, 0, 6.0),
            vehicle(1, VehicleKind::Hv, 80.0, 1, 4.0),
        ]);
        let r = compute_reward(&w, &BTreeMap::new(), &StepEvents::default(), &RewardConfig::default()).unwrap();
        assert_eq!(r.r4, 0.0);
        assert_eq!(r.r5, 0.0);
        assert!(r.total.is_finite());
    }

    #[test]
    fn corridor_zone_boundaries() {
        let cfg = RewardConfig::default();
        let emv = vehicle(0, VehicleKind::Emv, 10.0, 0, 6.0);
        let vs = vec![
            emv.clone(),
            vehicle(1, VehicleKind::Hv, 10.0, 0, 0.0), // level with EMV: not ahead
            vehicle(2, VehicleKind::Hv, 60.0, 0, 0.0), // exactly 50 m: counted
            vehicle(3, VehicleKind::Hv, 60.01, 0, 0.0), // beyond range
            vehicle(4, VehicleKind::Cv, 30.0, 1, 0.0), // other lane
        ];
        assert_eq!(count_blocking(&vs, &emv, &cfg), 1);
    }
}
