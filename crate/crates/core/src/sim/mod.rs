//! Discrete-time microscopic traffic world on a straight multi-lane segment.
//!
//! One emergency vehicle (EMV) enters from upstream while connected vehicles
//! (CVs) take commanded actions and human-driven vehicles (HVs) follow a
//! Krauss car-following rule. Every random draw comes from the world's own
//! seeded stream, so a `(seed, action sequence)` pair replays bit-identically.

mod export;
mod init;
mod krauss;
mod world;

pub use export::{write_trajectory_csv, TrajectoryFrame, TrajectoryRecorder};
pub use init::{init_episode, sample_truncated_normal, MAX_PLACEMENT_ATTEMPTS};
pub use krauss::{krauss_hv_speed, safe_speed, KraussParams};
pub use world::{apply_cv_action, detect_collisions, step_emv, DoneReason, StepEvents, World};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Front-bumper gap required on both sides of a lane change, and between
/// vehicles at placement time.
pub const MIN_GAP: f64 = 2.0;
/// Bound on the commanded CV acceleration (m/s²).
pub const A_MAX: f64 = 4.0;
/// |lane_offset| above which a CV requests a lane change.
pub const LANE_CHANGE_THRESHOLD: f64 = 0.5;
/// EMV acceleration while below its target speed (m/s²).
pub const EMV_ACCEL: f64 = 3.0;
/// Upstream spawn position of the EMV (m).
pub const EMV_SPAWN_X: f64 = -50.0;
/// Initial EMV speed (m/s).
pub const EMV_SPAWN_SPEED: f64 = 8.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid episode config: {0}")]
    InvalidConfig(String),
    #[error("could not place vehicle {vehicle} without overlap after {attempts} attempts")]
    Placement { vehicle: u32, attempts: usize },
    #[error("action for unknown or non-CV vehicle id {0}")]
    UnknownCv(u32),
    #[error("world has no emergency vehicle")]
    MissingEmv,
    #[error("trajectory export failed: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VehicleKind {
    Cv,
    Hv,
    Emv,
}

impl VehicleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleKind::Cv => "CV",
            VehicleKind::Hv => "HV",
            VehicleKind::Emv => "EMV",
        }
    }
}

/// Kinematic state of one vehicle. `x` is the front bumper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    pub kind: VehicleKind,
    pub x: f64,
    pub lane: usize,
    pub v: f64,
    /// Last applied acceleration.
    pub a: f64,
    pub length: f64,
    /// Free-flow speed the car-following rule accelerates towards; capped by
    /// the speed limit when used.
    pub desired_speed: f64,
}

impl VehicleState {
    /// Rear bumper position.
    pub fn rear(&self) -> f64 {
        self.x - self.length
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadGeometry {
    pub length: f64,
    pub lane_count: usize,
    pub lane_width: f64,
    pub speed_limit: f64,
    pub dt: f64,
}

impl Default for RoadGeometry {
    fn default() -> Self {
        Self {
            length: 200.0,
            lane_count: 2,
            lane_width: 3.5,
            speed_limit: 13.89,
            dt: 0.5,
        }
    }
}

impl RoadGeometry {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length),
            ("lane_width", self.lane_width),
            ("speed_limit", self.speed_limit),
            ("dt", self.dt),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(SimError::InvalidConfig(format!("{name} must be positive, got {value}")));
            }
        }
        if self.lane_count == 0 {
            return Err(SimError::InvalidConfig("lane_count must be positive".into()));
        }
        Ok(())
    }
}

/// One sampled scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Total vehicle count including the EMV.
    pub n_vehicles: usize,
    pub cv_penetration: f64,
    pub seed: u64,
    pub geometry: RoadGeometry,
    pub max_steps: u64,
    pub emv_target_speed: f64,
    pub emv_length: f64,
    pub collision_terminates: bool,
    /// Enables the gap-incentive lane-change rule for HVs.
    pub hv_lane_changes: bool,
    /// Caps commanded CV speeds by the Krauss safe speed.
    pub cv_safe_speed: bool,
    /// Stage label carried along for logging; 0 when not curriculum-driven.
    pub stage: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            n_vehicles: 9,
            cv_penetration: 1.0,
            seed: 0,
            geometry: RoadGeometry::default(),
            max_steps: 120,
            emv_target_speed: 12.0,
            emv_length: 6.0,
            collision_terminates: true,
            hv_lane_changes: false,
            cv_safe_speed: true,
            stage: 0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.n_vehicles < 2 {
            return Err(SimError::InvalidConfig(format!(
                "n_vehicles must be at least 2, got {}",
                self.n_vehicles
            )));
        }
        if !(0.0..=1.0).contains(&self.cv_penetration) {
            return Err(SimError::InvalidConfig(format!(
                "cv_penetration must lie in [0, 1], got {}",
                self.cv_penetration
            )));
        }
        if self.max_steps == 0 {
            return Err(SimError::InvalidConfig("max_steps must be at least 1".into()));
        }
        if !(self.emv_target_speed > 0.0) {
            return Err(SimError::InvalidConfig("emv_target_speed must be positive".into()));
        }
        if !(2.0..=8.0).contains(&self.emv_length) {
            return Err(SimError::InvalidConfig("emv_length must lie in [2, 8]".into()));
        }
        Ok(())
    }

    /// Number of CVs among the non-EMV vehicles.
    pub fn cv_count(&self) -> usize {
        let others = (self.n_vehicles - 1) as f64;
        ((self.cv_penetration * others).round() as usize).min(self.n_vehicles - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub step: u64,
    pub follower_id: u32,
    pub leader_id: u32,
    pub lane: usize,
}

/// Commanded CV control. Components are clamped before actuation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CvAction {
    pub accel: f64,
    pub lane_offset: f64,
}

impl CvAction {
    pub fn new(accel: f64, lane_offset: f64) -> Self {
        Self { accel, lane_offset }
    }

    pub fn clamped(self) -> Self {
        Self {
            accel: self.accel.clamp(-A_MAX, A_MAX),
            lane_offset: self.lane_offset.clamp(-1.0, 1.0),
        }
    }
}
