use super::{RoadGeometry, VehicleState};

/// Krauss car-following parameters (SUMO defaults).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KraussParams {
    /// Driver reaction time τ (s).
    pub tau: f64,
    /// Comfortable deceleration b (m/s²).
    pub decel: f64,
    /// Maximum acceleration (m/s²).
    pub accel: f64,
    /// Driver imperfection ε (m/s).
    pub sigma: f64,
}

impl Default for KraussParams {
    fn default() -> Self {
        Self {
            tau: 1.0,
            decel: 4.5,
            accel: 2.6,
            sigma: 0.5,
        }
    }
}

/// Collision-free speed behind `leader`; `+∞` without a leader.
///
/// `v_safe = v_l + (gap − v_l·τ) / ((v + v_l)/(2b) + τ)` with
/// `gap = x_l − length_l − x`.
pub fn safe_speed(follower: &VehicleState, leader: Option<&VehicleState>, params: &KraussParams) -> f64 {
    let Some(leader) = leader else {
        return f64::INFINITY;
    };
    let gap = leader.rear() - follower.x;
    let vl = leader.v;
    vl + (gap - vl * params.tau) / ((follower.v + vl) / (2.0 * params.decel) + params.tau)
}

/// One Krauss speed update for a human-driven follower.
///
/// `xi` is the U[0,1] imperfection draw; pass 0 for the deterministic bound.
pub fn krauss_hv_speed(
    follower: &VehicleState,
    leader: Option<&VehicleState>,
    geometry: &RoadGeometry,
    params: &KraussParams,
    xi: f64,
) -> f64 {
    let v_max = follower.desired_speed.min(geometry.speed_limit);
    let v_safe = safe_speed(follower, leader, params);
    let v_des = (follower.v + params.accel * geometry.dt).min(v_max).min(v_safe);
    (v_des - params.sigma * xi).max(0.0)
}
