//! Evaluation reports: per-bucket summaries with the seeds and initial-world
//! hashes behind them, plus a per-episode CSV from which every aggregate can
//! be recomputed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::metrics::{summarize, EpisodeMetrics, Summary};
use crate::sim::DoneReason;

use super::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub name: String,
    pub n_range: (usize, usize),
    pub rho_range: (f64, f64),
    /// Scenario seeds in evaluation order.
    pub seeds: Vec<u64>,
    /// Hash of each initial world, aligned with `seeds`.
    pub world_hashes: Vec<u64>,
    pub summary: Summary,
    #[serde(skip)]
    pub episodes: Vec<EpisodeMetrics>,
}

impl BucketReport {
    pub fn new(name: &str, n_range: (usize, usize), rho_range: (f64, f64), episodes: Vec<EpisodeMetrics>) -> Self {
        Self {
            name: name.to_string(),
            n_range,
            rho_range,
            seeds: episodes.iter().map(|e| e.seed).collect(),
            world_hashes: episodes.iter().map(|e| e.world_hash).collect(),
            summary: summarize(&episodes),
            episodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub master_seed: u64,
    pub buckets: Vec<BucketReport>,
}

pub const EPISODES_HEADER: &str =
    "policy,bucket,seed,n_vehicles,n_cv,emv_time,censored,corridor_time,efficiency,collisions,total_return,steps,done,world_hash";

impl EvalReport {
    pub fn bucket(&self, name: &str) -> Option<&BucketReport> {
        self.buckets.iter().find(|b| b.name == name)
    }

    /// Per-episode rows. Floats use the shortest round-trip representation so
    /// the CSV reproduces the report exactly.
    pub fn write_episodes_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{EPISODES_HEADER}")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for b in &self.buckets {
            for e in &b.episodes {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{:016x}",
                    self.policy,
                    b.name,
                    e.seed,
                    e.n_vehicles,
                    e.n_cv,
                    e.emv_time,
                    e.censored,
                    opt(e.corridor_time),
                    opt(e.efficiency),
                    e.collisions,
                    e.total_return,
                    e.steps,
                    e.done.as_str(),
                    e.world_hash
                )?;
            }
        }
        Ok(())
    }

    /// Human-readable table, one line per bucket.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<20} {:<8} {:>4} {:>16} {:>16} {:>8} {:>14}\n",
            "policy", "bucket", "n", "emv_time (s)", "corridor (s)", "coll %", "efficiency"
        );
        let pm = |m: Option<f64>, sd: Option<f64>| match (m, sd) {
            (Some(m), Some(sd)) => format!("{m:.2}±{sd:.2}"),
            _ => "-".to_string(),
        };
        for b in &self.buckets {
            let x = &b.summary;
            s.push_str(&format!(
                "{:<20} {:<8} {:>4} {:>16} {:>16} {:>8.1} {:>14}\n",
                self.policy,
                b.name,
                x.episodes,
                pm(Some(x.emv_time_mean), Some(x.emv_time_std)),
                pm(x.corridor_time_mean, x.corridor_time_std),
                x.collision_rate,
                pm(x.efficiency_mean, x.efficiency_std),
            ));
        }
        s
    }

    /// Writes `report.json` and `episodes.csv` into `dir` (prefixed by
    /// `prefix` when given) and returns the paths written.
    pub fn write(&self, dir: &Path, prefix: Option<&str>) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let name = |base: &str| match prefix {
            Some(p) => dir.join(format!("{p}_{base}")),
            None => dir.join(base),
        };
        let report = name("report.json");
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(&report, json)?;
        let episodes = name("episodes.csv");
        let mut buf = Vec::new();
        self.write_episodes_csv(&mut buf)?;
        fs::write(&episodes, buf)?;
        Ok(vec![report, episodes])
    }
}

/// Parses a per-episode CSV back into `(policy, bucket, metrics)` rows.
pub fn read_episodes_csv(text: &str) -> Result<Vec<(String, String, EpisodeMetrics)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == EPISODES_HEADER => {}
        _ => {
            return Err(HarnessError::Csv {
                line: 1,
                message: "missing header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let bad = |message: String| HarnessError::Csv { line: i + 1, message };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 14 {
            return Err(bad(format!("expected 14 fields, got {}", f.len())));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|e| bad(format!("field {k}: {e}")));
        let int = |k: usize| f[k].parse::<u64>().map_err(|e| bad(format!("field {k}: {e}")));
        let opt = |k: usize| if f[k].is_empty() { Ok(None) } else { num(k).map(Some) };
        let done = match f[12] {
            "success" => DoneReason::Success,
            "timeout" => DoneReason::Timeout,
            "collision" => DoneReason::Collision,
            other => return Err(bad(format!("unknown done reason {other}"))),
        };
        let metrics = EpisodeMetrics {
            seed: int(2)?,
            n_vehicles: int(3)? as usize,
            n_cv: int(4)? as usize,
            emv_time: num(5)?,
            censored: f[6].parse().map_err(|e| bad(format!("field 6: {e}")))?,
            corridor_time: opt(7)?,
            efficiency: opt(8)?,
            collisions: int(9)? as usize,
            total_return: num(10)?,
            steps: int(11)?,
            done,
            world_hash: u64::from_str_radix(f[13], 16).map_err(|e| bad(format!("field 13: {e}")))?,
        };
        rows.push((f[0].to_string(), f[1].to_string(), metrics));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn episode(seed: u64, t: f64, collisions: usize, eff: Option<f64>) -> EpisodeMetrics {
        EpisodeMetrics {
            seed,
            n_vehicles: 8,
            n_cv: 5,
            emv_time: t,
            censored: false,
            corridor_time: if seed.is_multiple_of(2) {
                Some(0.1 * seed as f64)
            } else {
                None
            },
            efficiency: eff,
            collisions,
            total_return: 100.0 / 3.0,
            steps: 40,
            done: if collisions > 0 {
                DoneReason::Collision
            } else {
                DoneReason::Success
            },
            world_hash: seed.wrapping_mul(0x9e37_79b9_7f4a_7c15),
        }
    }

    #[test]
    fn csv_roundtrip_reproduces_aggregates() {
        let a = vec![episode(1, 17.3, 0, Some(0.8)), episode(2, 21.0 / 3.0, 1, None)];
        let b = vec![
            episode(4, 30.1, 0, Some(0.61)),
            episode(7, 29.9, 0, Some(0.7)),
            episode(8, 1e-3, 0, None),
        ];
        let report = EvalReport {
            policy: "trained".into(),
            master_seed: 3,
            buckets: vec![
                BucketReport::new("small", (6, 9), (0.67, 1.0), a),
                BucketReport::new("large", (13, 18), (0.0, 0.33), b),
            ],
        };
        let mut buf = Vec::new();
        report.write_episodes_csv(&mut buf).unwrap();
        let rows = read_episodes_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(rows.len(), 5);
        for bucket in &report.buckets {
            let eps: Vec<EpisodeMetrics> = rows
                .iter()
                .filter(|r| r.1 == bucket.name)
                .map(|r| r.2.clone())
                .collect();
            assert_eq!(eps, bucket.episodes);
            assert_eq!(summarize(&eps), bucket.summary);
        }
        assert!(report.table().lines().count() == 3);
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(read_episodes_csv("nope\n").is_err());
        let text = format!("{EPISODES_HEADER}\ntrained,x,1,2\n");
        assert!(matches!(
            read_episodes_csv(&text),
            Err(HarnessError::Csv { line: 2, .. })
        ));
    }
}
