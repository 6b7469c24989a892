use std::io::Write;

use super::{Result, VehicleState, World};
use crate::reward::RewardBreakdown;

/// Snapshot of the world after one step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFrame {
    pub step: u64,
    pub clock: f64,
    pub vehicles: Vec<VehicleState>,
    pub reward: Option<RewardBreakdown>,
}

/// Collects per-step snapshots for CSV export and metric computation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryRecorder {
    pub frames: Vec<TrajectoryFrame>,
}

impl TrajectoryRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, world: &World, reward: Option<RewardBreakdown>) {
        self.frames.push(TrajectoryFrame {
            step: world.t,
            clock: world.clock,
            vehicles: world.vehicles.clone(),
            reward,
        });
    }

    pub fn row_count(&self) -> usize {
        self.frames.iter().map(|f| f.vehicles.len()).sum()
    }
}

/// Writes one row per (step, vehicle). Reward columns are appended when
/// `with_reward` is set; frames without a breakdown leave them empty.
pub fn write_trajectory_csv<W: Write>(out: &mut W, frames: &[TrajectoryFrame], with_reward: bool) -> Result<()> {
    write!(out, "step,clock,id,kind,x,lane,v,a")?;
    if with_reward {
        write!(out, ",r1,r2,r3,r4,r5,total")?;
    }
    writeln!(out)?;
    for frame in frames {
        for v in &frame.vehicles {
            write!(
                out,
                "{},{:.6},{},{},{:.6},{},{:.6},{:.6}",
                frame.step,
                frame.clock,
                v.id,
                v.kind.as_str(),
                v.x,
                v.lane,
                v.v,
                v.a
            )?;
            if with_reward {
                match &frame.reward {
                    Some(r) => write!(
                        out,
                        ",{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                        r.r1, r.r2, r.r3, r.r4, r.r5, r.total
                    )?,
                    None => write!(out, ",,,,,,")?,
                }
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{init_episode, EpisodeConfig};
    use std::collections::BTreeMap;

    #[test]
    fn csv_has_header_and_fixed_precision() {
        let mut world = init_episode(&EpisodeConfig::default()).unwrap();
        let mut rec = TrajectoryRecorder::new();
        for _ in 0..3 {
            world.step(&BTreeMap::new()).unwrap();
            rec.record(&world, None);
        }
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &rec.frames, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("step,clock,id,kind,x,lane,v,a"));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[0], "1");
        assert_eq!(first[1], "0.500000");
        assert_eq!(first[3], "EMV");
        assert_eq!(first[4].split('.').nth(1).unwrap().len(), 6);
        assert_eq!(text.lines().count(), 1 + rec.row_count());
    }
}
