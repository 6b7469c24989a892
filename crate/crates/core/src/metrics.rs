//! Episode metrics: EMV travel time, corridor formation time, collision
//! rate and traffic efficiency, computed from a per-step trace.

use serde::{Deserialize, Serialize};

use crate::reward::{count_blocking, mean_cv_speed, RewardConfig};
use crate::sim::{DoneReason, World};

/// Number of consecutive clear steps that count as an open corridor.
pub const CORRIDOR_SUSTAIN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: u64,
    pub clock: f64,
    pub emv_x: f64,
    pub n_block: usize,
    pub mean_cv_speed: Option<f64>,
}

/// Per-step observations of one episode, starting with the initial state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub points: Vec<TracePoint>,
}

impl EpisodeTrace {
    pub fn observe(&mut self, world: &World, reward: &RewardConfig) {
        let emv = world.emv();
        self.points.push(TracePoint {
            step: world.t,
            clock: world.clock,
            emv_x: emv.x,
            n_block: count_blocking(&world.vehicles, emv, reward),
            mean_cv_speed: mean_cv_speed(&world.vehicles),
        });
    }
}

/// Travel time over the road segment and whether it was censored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TravelTime {
    pub seconds: f64,
    pub censored: bool,
}

fn crossing_clock(points: &[TracePoint], threshold: f64) -> Option<f64> {
    let k = points.iter().position(|p| p.emv_x >= threshold)?;
    if k == 0 {
        return Some(points[0].clock);
    }
    let (a, b) = (&points[k - 1], &points[k]);
    let frac = (threshold - a.emv_x) / (b.emv_x - a.emv_x);
    Some(a.clock + frac * (b.clock - a.clock))
}

/// Time between the EMV front crossing x = 0 and x = `road_length`, linearly
/// interpolated between steps. If the EMV never exits, the result is
/// censored at `horizon` (the episode's time budget).
pub fn emv_travel_time(trace: &EpisodeTrace, road_length: f64, horizon: f64) -> TravelTime {
    let entry = crossing_clock(&trace.points, 0.0);
    match (entry, crossing_clock(&trace.points, road_length)) {
        (Some(entry), Some(exit)) => TravelTime {
            seconds: exit - entry,
            censored: false,
        },
        (entry, _) => TravelTime {
            seconds: horizon - entry.unwrap_or(0.0),
            censored: true,
        },
    }
}

/// Clock of the first step, at or after the entry step, that starts a run of
/// [`CORRIDOR_SUSTAIN`] clear steps, minus the entry step's clock.
pub fn corridor_time(trace: &EpisodeTrace) -> Option<f64> {
    let pts = &trace.points;
    let entry = pts.iter().position(|p| p.emv_x >= 0.0)?;
    (entry..pts.len())
        .find(|&k| k + CORRIDOR_SUSTAIN <= pts.len() && pts[k..k + CORRIDOR_SUSTAIN].iter().all(|p| p.n_block == 0))
        .map(|k| pts[k].clock - pts[entry].clock)
}

/// Time-mean of `mean CV speed / v_normal` over steps with the EMV front on
/// the segment. `None` when there are no such steps with CVs present.
pub fn traffic_efficiency(trace: &EpisodeTrace, road_length: f64, v_normal: f64) -> Option<f64> {
    let speeds: Vec<f64> = trace
        .points
        .iter()
        .filter(|p| p.emv_x >= 0.0 && p.emv_x < road_length)
        .filter_map(|p| p.mean_cv_speed)
        .collect();
    (!speeds.is_empty()).then(|| speeds.iter().sum::<f64>() / speeds.len() as f64 / v_normal)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub n_vehicles: usize,
    pub n_cv: usize,
    pub emv_time: f64,
    pub censored: bool,
    pub corridor_time: Option<f64>,
    pub efficiency: Option<f64>,
    pub collisions: usize,
    pub total_return: f64,
    pub steps: u64,
    pub done: DoneReason,
    pub world_hash: u64,
}

impl EpisodeMetrics {
    pub fn collided(&self) -> bool {
        self.collisions > 0
    }
}

/// Sample mean and (n−1) standard deviation; std is 0 for a single value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Percentage of episodes with at least one collision.
pub fn collision_rate(episodes: &[EpisodeMetrics]) -> f64 {
    if episodes.is_empty() {
        return 0.0;
    }
    100.0 * episodes.iter().filter(|e| e.collided()).count() as f64 / episodes.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub emv_time_mean: f64,
    pub emv_time_std: f64,
    pub censored: usize,
    pub corridor_time_mean: Option<f64>,
    pub corridor_time_std: Option<f64>,
    /// Episodes in which the corridor never opened.
    pub corridor_missing: usize,
    pub collision_rate: f64,
    pub efficiency_mean: Option<f64>,
    pub efficiency_std: Option<f64>,
    /// Episodes left out of the efficiency average for having no CVs.
    pub efficiency_excluded: usize,
    pub mean_return: f64,
}

pub fn summarize(episodes: &[EpisodeMetrics]) -> Summary {
    let times: Vec<f64> = episodes.iter().map(|e| e.emv_time).collect();
    let (emv_time_mean, emv_time_std) = mean_std(&times);
    let corridor: Vec<f64> = episodes.iter().filter_map(|e| e.corridor_time).collect();
    let eff: Vec<f64> = episodes.iter().filter_map(|e| e.efficiency).collect();
    let opt = |v: &[f64]| {
        if v.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_std(v);
            (Some(m), Some(s))
        }
    };
    let (corridor_time_mean, corridor_time_std) = opt(&corridor);
    let (efficiency_mean, efficiency_std) = opt(&eff);
    Summary {
        episodes: episodes.len(),
        emv_time_mean,
        emv_time_std,
        censored: episodes.iter().filter(|e| e.censored).count(),
        corridor_time_mean,
        corridor_time_std,
        corridor_missing: episodes.len() - corridor.len(),
        collision_rate: collision_rate(episodes),
        efficiency_mean,
        efficiency_std,
        efficiency_excluded: episodes.len() - eff.len(),
        mean_return: mean_std(&episodes.iter().map(|e| e.total_return).collect::<Vec<_>>()).0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(xs: &[f64], blocks: &[usize], dt: f64) -> EpisodeTrace {
        EpisodeTrace {
            points: xs
                .iter()
                .zip(blocks)
                .enumerate()
                .map(|(k, (&x, &b))| TracePoint {
                    step: k as u64,
                    clock: k as f64 * dt,
                    emv_x: x,
                    n_block: b,
                    mean_cv_speed: Some(4.5),
                })
                .collect(),
        }
    }

    #[test]
    fn constant_speed_crossing() {
        let xs: Vec<f64> = (0..60).map(|k| -50.0 + 6.0 * k as f64).collect();
        let t = emv_travel_time(&trace(&xs, &vec![0; 60], 0.5), 200.0, 60.0);
        assert!(!t.censored);
        assert!((t.seconds - 200.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn deceleration_phase_matches_piecewise_integration() {
        // 10 m/s for 10 steps, then 4 m/s until exit, dt = 0.5.
        let mut xs = vec![-5.0];
        for k in 0..100 {
            let v = if k < 10 { 10.0 } else { 4.0 };
            xs.push(xs.last().unwrap() + v * 0.5);
        }
        let t = emv_travel_time(&trace(&xs, &vec![0; xs.len()], 0.5), 200.0, 60.0);
        // Entry after 0.5 s, then 45 m at 10 m/s (4.5 s) and 155 m at 4 m/s.
        let expect = 45.0 / 10.0 + 155.0 / 4.0;
        assert!((t.seconds - expect).abs() < 1e-12, "{}", t.seconds);
    }

    #[test]
    fn never_exits_is_censored() {
        let xs = [-50.0, -10.0, 5.0, 20.0];
        let t = emv_travel_time(&trace(&xs, &[0; 4], 0.5), 200.0, 60.0);
        assert!(t.censored);
        let entry = 0.5 + 0.5 * (10.0 / 15.0);
        assert!((t.seconds - (60.0 - entry)).abs() < 1e-12);
    }

    #[test]
    fn corridor_examples() {
        let mut xs = vec![-6.0; 12];
        xs.extend((0..8).map(|k| k as f64));
        let mut blocks = vec![3; 14];
        blocks.extend([0, 0, 1, 0, 0, 0]);
        // Entry at step 12, clear from step 14 → 1.0 s.
        assert_eq!(corridor_time(&trace(&xs, &blocks, 0.5)), Some(1.0));
        let clear = vec![0; 20];
        assert_eq!(corridor_time(&trace(&xs, &clear, 0.5)), Some(0.0));
        assert_eq!(corridor_time(&trace(&xs, &[1; 20], 0.5)), None);
        // One clear step is flicker, not a corridor.
        let mut flicker = vec![1; 20];
        flicker[15] = 0;
        assert_eq!(corridor_time(&trace(&xs, &flicker, 0.5)), None);
    }

    #[test]
    fn efficiency_uses_on_segment_steps() {
        let mut t = trace(&[-10.0, 0.0, 100.0, 250.0], &[0; 4], 0.5);
        t.points[0].mean_cv_speed = Some(100.0);
        t.points[1].mean_cv_speed = Some(3.645);
        t.points[2].mean_cv_speed = Some(3.645);
        t.points[3].mean_cv_speed = Some(100.0);
        assert!((traffic_efficiency(&t, 200.0, 4.5).unwrap() - 0.81).abs() < 1e-12);
        for p in &mut t.points {
            p.mean_cv_speed = None;
        }
        assert_eq!(traffic_efficiency(&t, 200.0, 4.5), None);
    }

    #[test]
    fn sample_std_uses_n_minus_one() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn one_collision_in_hundred_is_one_percent() {
        let base = EpisodeMetrics {
            seed: 0,
            n_vehicles: 6,
            n_cv: 3,
            emv_time: 20.0,
            censored: false,
            corridor_time: None,
            efficiency: None,
            collisions: 0,
            total_return: 0.0,
            steps: 10,
            done: DoneReason::Success,
            world_hash: 0,
        };
        let mut eps = vec![base.clone(); 100];
        eps[7].collisions = 2;
        assert_eq!(collision_rate(&eps), 1.0);
    }
}
