//! Difficulty schedule over training episodes.
//!
//! The paper schedule has three stages at 30% / 40% / 30% of the run, with
//! denser traffic and fewer connected vehicles in later stages. The desk
//! schedule keeps training in the easier regime that short runs are
//! evaluated on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Result, TrainError};
use crate::sim::EpisodeConfig;

/// Reference run length the stage boundaries are quoted for.
pub const REFERENCE_EPISODES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    #[default]
    Paper,
    Desk,
}

/// One stage: an inclusive 1-based episode range and the ranges that
/// vehicle count and CV penetration are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub first: usize,
    pub last: usize,
    pub n_range: (usize, usize),
    pub rho_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub total_episodes: usize,
    pub stages: Vec<Stage>,
    /// When false, every episode first draws a stage uniformly.
    pub enabled: bool,
}

/// Vehicle-count and penetration ranges of one stage.
type Ranges = ((usize, usize), (f64, f64));

const PAPER_RANGES: [Ranges; 3] = [((6, 9), (0.67, 1.0)), ((9, 12), (0.33, 0.67)), ((12, 18), (0.0, 0.33))];

fn from_fractions(total: usize, ends: &[f64], ranges: &[Ranges], enabled: bool) -> CurriculumSchedule {
    let mut stages = Vec::new();
    let mut first = 1;
    for (k, &(n_range, rho_range)) in ranges.iter().enumerate() {
        let last = if k + 1 == ranges.len() {
            total
        } else {
            ((ends[k] * total as f64).round() as usize).min(total)
        };
        if last >= first {
            stages.push(Stage {
                first,
                last,
                n_range,
                rho_range,
            });
            first = last + 1;
        }
    }
    CurriculumSchedule {
        total_episodes: total,
        stages,
        enabled,
    }
}

impl CurriculumSchedule {
    /// Three stages ending at 30% and 70% of `total`, rounded.
    pub fn paper(total: usize, enabled: bool) -> Self {
        from_fractions(total, &[0.3, 0.7], &PAPER_RANGES, enabled)
    }

    /// First half in the easiest stage, second half over N ∈ [6, 12],
    /// ρ ∈ [0.5, 1].
    pub fn desk(total: usize, enabled: bool) -> Self {
        from_fractions(total, &[0.5], &[PAPER_RANGES[0], ((6, 12), (0.5, 1.0))], enabled)
    }

    pub fn new(kind: ScheduleKind, total: usize, enabled: bool) -> Self {
        match kind {
            ScheduleKind::Paper => Self::paper(total, enabled),
            ScheduleKind::Desk => Self::desk(total, enabled),
        }
    }

    /// Checks that the stages partition `[1, total_episodes]`.
    pub fn validate(&self) -> Result<()> {
        let mut next = 1;
        for s in &self.stages {
            if s.first != next || s.last < s.first {
                return Err(TrainError::InvalidConfig(format!(
                    "stage {}..={} does not continue at episode {next}",
                    s.first, s.last
                )));
            }
            if s.n_range.0 > s.n_range.1 || s.rho_range.0 > s.rho_range.1 {
                return Err(TrainError::InvalidConfig("stage range is reversed".into()));
            }
            next = s.last + 1;
        }
        if next != self.total_episodes + 1 {
            return Err(TrainError::InvalidConfig(format!(
                "stages cover 1..{next}, expected 1..={}",
                self.total_episodes
            )));
        }
        Ok(())
    }

    /// Index of the stage containing 1-based `episode`; the last stage for
    /// indices past the end.
    pub fn stage_index(&self, episode: usize) -> usize {
        self.stages
            .iter()
            .position(|s| (s.first..=s.last).contains(&episode))
            .unwrap_or(self.stages.len().saturating_sub(1))
    }
}

/// Scenario for 1-based `episode`: N uniform over the stage's integer range,
/// ρ uniform over its continuous range. `stage` in the result is 1-based.
pub fn curriculum_sample<R: Rng + ?Sized>(
    episode: usize,
    schedule: &CurriculumSchedule,
    base: &EpisodeConfig,
    rng: &mut R,
) -> EpisodeConfig {
    let k = if schedule.enabled {
        schedule.stage_index(episode)
    } else {
        rng.random_range(0..schedule.stages.len())
    };
    let stage = &schedule.stages[k];
    let rho = if stage.rho_range.0 < stage.rho_range.1 {
        rng.random_range(stage.rho_range.0..=stage.rho_range.1)
    } else {
        stage.rho_range.0
    };
    EpisodeConfig {
        n_vehicles: rng.random_range(stage.n_range.0..=stage.n_range.1),
        cv_penetration: rho,
        stage: k + 1,
        ..base.clone()
    }
}
