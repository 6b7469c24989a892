use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::krauss::{krauss_hv_speed, safe_speed, KraussParams};
use super::{
    CollisionEvent, CvAction, EpisodeConfig, Result, SimError, VehicleKind, VehicleState, EMV_ACCEL,
    LANE_CHANGE_THRESHOLD, MIN_GAP,
};

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DoneReason {
    Success,
    Timeout,
    Collision,
}

impl DoneReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DoneReason::Success => "success",
            DoneReason::Timeout => "timeout",
            DoneReason::Collision => "collision",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaneChange {
    pub id: u32,
    pub from: usize,
    pub to: usize,
}

/// What happened during a single [`World::step`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepEvents {
    pub collisions: Vec<CollisionEvent>,
    pub lane_changes: Vec<LaneChange>,
    pub dropped_lane_changes: usize,
    /// Non-EMV vehicles whose rear bumper passed the segment end.
    pub exited: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub config: EpisodeConfig,
    /// Sorted by ascending id; the EMV has id 0.
    pub vehicles: Vec<VehicleState>,
    pub t: u64,
    pub clock: f64,
    /// Append-only collision log.
    pub events: Vec<CollisionEvent>,
    pub dropped_lane_changes: u64,
    pub krauss: KraussParams,
    last_step_collided: bool,
    rng: ChaCha8Rng,
}

/// Indices of each lane's vehicles ordered by `(x, id)`, rear-most first.
fn lane_orders(vehicles: &[VehicleState], lane_count: usize) -> Vec<Vec<usize>> {
    let mut lanes = vec![Vec::new(); lane_count];
    for (i, v) in vehicles.iter().enumerate() {
        lanes[v.lane].push(i);
    }
    for lane in &mut lanes {
        lane.sort_by(|&a, &b| {
            vehicles[a]
                .x
                .total_cmp(&vehicles[b].x)
                .then(vehicles[a].id.cmp(&vehicles[b].id))
        });
    }
    lanes
}

/// Leader index for every vehicle (nearest ahead in the same lane).
fn leaders(vehicles: &[VehicleState], lane_count: usize) -> Vec<Option<usize>> {
    let mut out = vec![None; vehicles.len()];
    for lane in lane_orders(vehicles, lane_count) {
        for pair in lane.windows(2) {
            out[pair[0]] = Some(pair[1]);
        }
    }
    out
}

/// Nearest vehicles ahead and behind position `x` in `lane`, skipping `skip`.
fn neighbours_in_lane(
    vehicles: &[VehicleState],
    lane: usize,
    x: f64,
    skip: usize,
) -> (Option<&VehicleState>, Option<&VehicleState>) {
    let mut ahead: Option<&VehicleState> = None;
    let mut behind: Option<&VehicleState> = None;
    for (j, v) in vehicles.iter().enumerate() {
        if j == skip || v.lane != lane {
            continue;
        }
        if v.x >= x {
            if ahead.is_none_or(|a| v.x < a.x) {
                ahead = Some(v);
            }
        } else if behind.is_none_or(|b| v.x > b.x) {
            behind = Some(v);
        }
    }
    (ahead, behind)
}

fn lane_change_feasible(vehicles: &[VehicleState], idx: usize, target: usize, lane_count: usize) -> bool {
    if target >= lane_count {
        return false;
    }
    let ego = &vehicles[idx];
    let (ahead, behind) = neighbours_in_lane(vehicles, target, ego.x, idx);
    let front_ok = ahead.is_none_or(|a| a.rear() - ego.x >= MIN_GAP);
    let rear_ok = behind.is_none_or(|b| ego.rear() - b.x >= MIN_GAP);
    front_ok && rear_ok
}

fn requested_lane(vehicle: &VehicleState, action: CvAction) -> Option<isize> {
    let action = action.clamped();
    if action.lane_offset.abs() > LANE_CHANGE_THRESHOLD {
        // negative offset = towards the left (lower index)
        Some(vehicle.lane as isize + action.lane_offset.signum() as isize)
    } else {
        None
    }
}

fn cv_next_speed(
    vehicle: &VehicleState,
    action: CvAction,
    leader: Option<&VehicleState>,
    config: &EpisodeConfig,
    krauss: &KraussParams,
) -> f64 {
    let action = action.clamped();
    let mut v = (vehicle.v + action.accel * config.geometry.dt).min(config.geometry.speed_limit);
    if config.cv_safe_speed {
        v = v.min(safe_speed(vehicle, leader, krauss));
    }
    v.max(0.0)
}

fn emv_next_speed(
    emv: &VehicleState,
    leader: Option<&VehicleState>,
    config: &EpisodeConfig,
    krauss: &KraussParams,
) -> f64 {
    let target = config.emv_target_speed.min(config.geometry.speed_limit);
    (emv.v + EMV_ACCEL * config.geometry.dt)
        .min(target)
        .min(safe_speed(emv, leader, krauss))
        .max(0.0)
}

/// Speed and lane update of a single CV against the current world, without
/// advancing its position. Infeasible lane changes leave the lane unchanged.
pub fn apply_cv_action(vehicle: &VehicleState, action: CvAction, world: &World) -> VehicleState {
    let idx = world
        .vehicles
        .iter()
        .position(|v| v.id == vehicle.id)
        .unwrap_or(usize::MAX);
    let leader = world.leader_of_state(vehicle, idx);
    let v_next = cv_next_speed(vehicle, action, leader, &world.config, &world.krauss);
    let mut next = vehicle.clone();
    next.a = (v_next - vehicle.v) / world.config.geometry.dt;
    next.v = v_next;
    if let Some(target) = requested_lane(vehicle, action) {
        if target >= 0 {
            let mut scratch = world.vehicles.clone();
            let slot = if idx < scratch.len() {
                scratch[idx] = vehicle.clone();
                idx
            } else {
                scratch.push(vehicle.clone());
                scratch.len() - 1
            };
            if lane_change_feasible(&scratch, slot, target as usize, world.config.geometry.lane_count) {
                next.lane = target as usize;
            }
        }
    }
    next
}

/// Speed update of the EMV: accelerate at 3 m/s² towards its target speed,
/// bounded by the deterministic Krauss safe speed.
pub fn step_emv(emv: &VehicleState, world: &World) -> VehicleState {
    let idx = world.vehicles.iter().position(|v| v.id == emv.id).unwrap_or(usize::MAX);
    let leader = world.leader_of_state(emv, idx);
    let v_next = emv_next_speed(emv, leader, &world.config, &world.krauss);
    let mut next = emv.clone();
    next.lane = 0;
    next.a = (v_next - emv.v) / world.config.geometry.dt;
    next.v = v_next;
    next
}

/// Same-lane (follower, nearest leader) pairs with a negative gap.
pub fn detect_collisions(vehicles: &[VehicleState], lane_count: usize, step: u64) -> Vec<CollisionEvent> {
    let mut out = Vec::new();
    for (lane, order) in lane_orders(vehicles, lane_count).into_iter().enumerate() {
        for pair in order.windows(2) {
            let (f, l) = (&vehicles[pair[0]], &vehicles[pair[1]]);
            if l.rear() - f.x < 0.0 {
                out.push(CollisionEvent {
                    step,
                    follower_id: f.id,
                    leader_id: l.id,
                    lane,
                });
            }
        }
    }
    out
}

impl World {
    pub(super) fn from_parts(config: EpisodeConfig, vehicles: Vec<VehicleState>, rng: ChaCha8Rng) -> Self {
        Self {
            config,
            vehicles,
            t: 0,
            clock: 0.0,
            events: Vec::new(),
            dropped_lane_changes: 0,
            krauss: KraussParams::default(),
            last_step_collided: false,
            rng,
        }
    }

    /// Builds a world from explicit vehicles (hand-made scenarios and tests).
    /// Vehicles are re-sorted by id.
    pub fn from_vehicles(config: EpisodeConfig, mut vehicles: Vec<VehicleState>, rng_seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        config.geometry.validate()?;
        vehicles.sort_by_key(|v| v.id);
        if vehicles.iter().filter(|v| v.kind == VehicleKind::Emv).count() != 1 {
            return Err(SimError::MissingEmv);
        }
        if vehicles.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(SimError::InvalidConfig("duplicate vehicle id".into()));
        }
        if vehicles.iter().any(|v| v.lane >= config.geometry.lane_count) {
            return Err(SimError::InvalidConfig("lane index out of range".into()));
        }
        Ok(Self::from_parts(config, vehicles, ChaCha8Rng::seed_from_u64(rng_seed)))
    }

    pub fn emv_index(&self) -> usize {
        self.vehicles
            .iter()
            .position(|v| v.kind == VehicleKind::Emv)
            .expect("world always holds an EMV")
    }

    pub fn emv(&self) -> &VehicleState {
        &self.vehicles[self.emv_index()]
    }

    pub fn vehicle(&self, id: u32) -> Option<&VehicleState> {
        self.vehicles
            .binary_search_by_key(&id, |v| v.id)
            .ok()
            .map(|i| &self.vehicles[i])
    }

    pub fn cv_ids(&self) -> Vec<u32> {
        self.vehicles
            .iter()
            .filter(|v| v.kind == VehicleKind::Cv)
            .map(|v| v.id)
            .collect()
    }

    /// Whether the last step recorded a collision.
    pub fn collided_last_step(&self) -> bool {
        self.last_step_collided
    }

    fn leader_of_state(&self, state: &VehicleState, skip: usize) -> Option<&VehicleState> {
        self.vehicles
            .iter()
            .enumerate()
            .filter(|(j, v)| *j != skip && v.lane == state.lane && (v.x, v.id) > (state.x, state.id))
            .map(|(_, v)| v)
            .min_by(|a, b| a.x.total_cmp(&b.x).then(a.id.cmp(&b.id)))
    }

    /// Advances the world by one step.
    ///
    /// Phases: (1) next speeds from the frozen state, (2) lane changes in
    /// ascending id order, (3) positions, (4) collision detection, then exited
    /// vehicles leave, and (5) the clock advances. CVs without an entry in
    /// `actions` drive like HVs.
    pub fn step(&mut self, actions: &BTreeMap<u32, CvAction>) -> Result<StepEvents> {
        for &id in actions.keys() {
            match self.vehicle(id) {
                Some(v) if v.kind == VehicleKind::Cv => {}
                _ => return Err(SimError::UnknownCv(id)),
            }
        }
        let geometry = self.config.geometry.clone();
        let lane_count = geometry.lane_count;
        let leader_idx = leaders(&self.vehicles, lane_count);

        // (1) speeds
        let mut next_v = vec![0.0; self.vehicles.len()];
        let mut requests: Vec<(usize, isize)> = Vec::new();
        for (i, vehicle) in self.vehicles.iter().enumerate() {
            let leader = leader_idx[i].map(|j| &self.vehicles[j]);
            next_v[i] = match (vehicle.kind, actions.get(&vehicle.id)) {
                (VehicleKind::Emv, _) => emv_next_speed(vehicle, leader, &self.config, &self.krauss),
                (VehicleKind::Cv, Some(&action)) => {
                    if let Some(target) = requested_lane(vehicle, action) {
                        requests.push((i, target));
                    }
                    cv_next_speed(vehicle, action, leader, &self.config, &self.krauss)
                }
                _ => {
                    let xi: f64 = self.rng.random();
                    if self.config.hv_lane_changes {
                        if let Some(target) = self.hv_lane_incentive(i, leader) {
                            requests.push((i, target));
                        }
                    }
                    krauss_hv_speed(vehicle, leader, &geometry, &self.krauss, xi)
                }
            };
        }

        // (2) lane changes, ascending id (vehicles are id-sorted)
        let mut events = StepEvents::default();
        for (i, target) in requests {
            let from = self.vehicles[i].lane;
            if target >= 0 && lane_change_feasible(&self.vehicles, i, target as usize, lane_count) {
                self.vehicles[i].lane = target as usize;
                events.lane_changes.push(LaneChange {
                    id: self.vehicles[i].id,
                    from,
                    to: target as usize,
                });
            } else {
                events.dropped_lane_changes += 1;
            }
        }
        self.dropped_lane_changes += events.dropped_lane_changes as u64;

        // (3) kinematics
        for (vehicle, &v) in self.vehicles.iter_mut().zip(&next_v) {
            vehicle.a = (v - vehicle.v) / geometry.dt;
            vehicle.v = v;
            vehicle.x += v * geometry.dt;
        }

        // (4) collisions
        events.collisions = detect_collisions(&self.vehicles, lane_count, self.t + 1);
        self.last_step_collided = !events.collisions.is_empty();
        self.events.extend_from_slice(&events.collisions);

        let road_end = geometry.length;
        self.vehicles.retain(|v| {
            let gone = v.kind != VehicleKind::Emv && v.rear() > road_end;
            if gone {
                events.exited.push(v.id);
            }
            !gone
        });

        // (5) clock
        self.t += 1;
        self.clock = self.t as f64 * geometry.dt;
        Ok(events)
    }

    /// Simple HV gap-incentive rule: move to an adjacent lane whose safe speed
    /// beats the current one by at least 1 m/s while the current lane holds the
    /// driver below its desired speed.
    fn hv_lane_incentive(&self, i: usize, leader: Option<&VehicleState>) -> Option<isize> {
        let ego = &self.vehicles[i];
        let here = safe_speed(ego, leader, &self.krauss);
        if here >= ego.desired_speed - 1.0 {
            return None;
        }
        let mut best: Option<(isize, f64)> = None;
        for delta in [-1isize, 1] {
            let lane = ego.lane as isize + delta;
            if lane < 0 || lane as usize >= self.config.geometry.lane_count {
                continue;
            }
            let (ahead, _) = neighbours_in_lane(&self.vehicles, lane as usize, ego.x, i);
            let there = safe_speed(ego, ahead, &self.krauss);
            if there > here + 1.0 && best.is_none_or(|(_, s)| there > s) {
                best = Some((lane, there));
            }
        }
        best.map(|(lane, _)| lane)
    }

    /// Termination check; collision takes precedence over success, which
    /// takes precedence over timeout.
    pub fn done(&self) -> Option<DoneReason> {
        if self.last_step_collided && self.config.collision_terminates {
            Some(DoneReason::Collision)
        } else if self.emv().x >= self.config.geometry.length {
            Some(DoneReason::Success)
        } else if self.t >= self.config.max_steps {
            Some(DoneReason::Timeout)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vehicle(id: u32, kind: VehicleKind, x: f64, lane: usize, v: f64, length: f64) -> VehicleState {
        VehicleState {
            id,
            kind,
            x,
            lane,
            v,
            a: 0.0,
            length,
            desired_speed: 13.89,
        }
    }

    fn world(vehicles: Vec<VehicleState>) -> World {
        World::from_vehicles(EpisodeConfig::default(), vehicles, 1).unwrap()
    }

    fn far_emv() -> VehicleState {
        vehicle(0, VehicleKind::Emv, -1000.0, 0, 0.0, 6.0)
    }

    #[test]
    fn identity_action_keeps_state() {
        let w = world(vec![far_emv(), vehicle(1, VehicleKind::Cv, 50.0, 0, 5.0, 4.5)]);
        let next = apply_cv_action(&w.vehicles[1], CvAction::default(), &w);
        assert_eq!(next.v, 5.0);
        assert_eq!(next.lane, 0);
        assert_eq!(next.x, 50.0);
        assert_eq!(next.a, 0.0);
    }

    #[test]
    fn positive_offset_moves_right_when_gaps_permit() {
        let w = world(vec![far_emv(), vehicle(1, VehicleKind::Cv, 50.0, 0, 5.0, 4.5)]);
        let next = apply_cv_action(&w.vehicles[1], CvAction::new(0.0, 0.6), &w);
        assert_eq!(next.lane, 1);
        let next = apply_cv_action(&w.vehicles[1], CvAction::new(0.0, 0.4), &w);
        assert_eq!(next.lane, 0);
        // leftward from lane 0 is out of range
        let next = apply_cv_action(&w.vehicles[1], CvAction::new(0.0, -0.9), &w);
        assert_eq!(next.lane, 0);
    }

    #[test]
    fn blocked_lane_change_is_dropped() {
        let w = world(vec![
            far_emv(),
            vehicle(1, VehicleKind::Cv, 50.0, 0, 5.0, 4.5),
            vehicle(2, VehicleKind::Hv, 55.0, 1, 5.0, 4.5),
        ]);
        // front gap in lane 1 = 55 - 4.5 - 50 = 0.5 < 2
        let next = apply_cv_action(&w.vehicles[1], CvAction::new(0.0, 1.0), &w);
        assert_eq!(next.lane, 0);
    }

    #[test]
    fn commanded_speed_caps_at_limit() {
        let w = world(vec![far_emv(), vehicle(1, VehicleKind::Cv, 50.0, 0, 13.0, 4.5)]);
        let next = apply_cv_action(&w.vehicles[1], CvAction::new(4.0, 0.0), &w);
        assert!((next.v - 13.89).abs() < 1e-12);
        let next = apply_cv_action(&w.vehicles[1], CvAction::new(-40.0, 0.0), &w);
        assert!((next.v - 11.0).abs() < 1e-12, "accel clamps to -4");
    }

    #[test]
    fn emv_accelerates_and_caps() {
        let mut w = world(vec![vehicle(0, VehicleKind::Emv, 0.0, 0, 8.0, 6.0)]);
        assert_eq!(step_emv(&w.vehicles[0], &w).v, 9.5);
        w.vehicles[0].v = 12.0;
        assert_eq!(step_emv(&w.vehicles[0], &w).v, 12.0);
    }

    #[test]
    fn emv_blocked_by_stopped_leader_stops() {
        let w = world(vec![
            vehicle(0, VehicleKind::Emv, 0.0, 0, 8.0, 6.0),
            vehicle(1, VehicleKind::Hv, 4.5, 0, 0.0, 4.5),
        ]);
        assert_eq!(step_emv(&w.vehicles[0], &w).v, 0.0);
    }

    #[test]
    fn lone_hv_advances() {
        let mut w = world(vec![far_emv(), vehicle(1, VehicleKind::Hv, 10.0, 1, 5.0, 4.5)]);
        w.krauss.sigma = 0.0; // forces ξ-term to zero
        w.vehicles[1].desired_speed = 5.0;
        w.step(&BTreeMap::new()).unwrap();
        assert!((w.vehicles[1].x - 12.5).abs() < 1e-12);
        assert_eq!(w.t, 1);
        assert_eq!(w.clock, 0.5);
    }

    #[test]
    fn unknown_cv_is_rejected() {
        let mut w = world(vec![far_emv(), vehicle(1, VehicleKind::Hv, 10.0, 1, 5.0, 4.5)]);
        let mut actions = BTreeMap::new();
        actions.insert(1, CvAction::default());
        assert!(matches!(w.step(&actions), Err(SimError::UnknownCv(1))));
        actions.clear();
        actions.insert(9, CvAction::default());
        assert!(matches!(w.step(&actions), Err(SimError::UnknownCv(9))));
    }

    #[test]
    fn collision_is_detected_only_within_a_lane() {
        let vs = vec![
            vehicle(1, VehicleKind::Hv, 50.1, 0, 0.0, 4.5),
            vehicle(2, VehicleKind::Hv, 54.5, 0, 0.0, 4.5),
        ];
        let hits = detect_collisions(&vs, 2, 3);
        assert_eq!(hits.len(), 1);
        assert_eq!((hits[0].follower_id, hits[0].leader_id, hits[0].lane), (1, 2, 0));
        let mut apart = vs.clone();
        apart[1].lane = 1;
        assert!(detect_collisions(&apart, 2, 3).is_empty());
    }

    #[test]
    fn done_reasons() {
        let mut w = world(vec![vehicle(0, VehicleKind::Emv, 200.3, 0, 12.0, 6.0)]);
        assert_eq!(w.done(), Some(DoneReason::Success));
        w.vehicles[0].x = 100.0;
        assert_eq!(w.done(), None);
        w.t = 120;
        assert_eq!(w.done(), Some(DoneReason::Timeout));
        w.t = 3;
        w.last_step_collided = true;
        assert_eq!(w.done(), Some(DoneReason::Collision));
        w.config.collision_terminates = false;
        assert_eq!(w.done(), None);
    }

    #[test]
    fn exited_vehicles_leave_the_world() {
        let mut w = world(vec![far_emv(), vehicle(1, VehicleKind::Hv, 204.0, 1, 5.0, 4.5)]);
        let ev = w.step(&BTreeMap::new()).unwrap();
        assert_eq!(ev.exited, vec![1]);
        assert_eq!(w.vehicles.len(), 1);
    }
}
