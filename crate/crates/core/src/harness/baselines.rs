//! Named policies for paired evaluation and the scenario buckets they are
//! evaluated on.
//!
//! The network variants share one parameter layout, so any checkpoint can be
//! evaluated under any of them: `gnn-flat` bypasses the planner,
//! `uniform-attention` replaces learned attention by inverse in-degree
//! weights and `no-edge-features` zeroes the edge inputs.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::policy::{checkpoint, ActMode, Policy, PolicyConfig};
use crate::reward::RewardConfig;
use crate::rng::{derive_seed, tags};
use crate::rollout::{evaluate, paired_scenarios, Driver};
use crate::sim::EpisodeConfig;
use crate::trainer::CurriculumSchedule;

use super::report::{BucketReport, EvalReport};
use super::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyName {
    NoControl,
    RandomCv,
    Trained,
    GnnFlat,
    UniformAttention,
    NoEdgeFeatures,
}

impl PolicyName {
    pub const ALL: [PolicyName; 6] = [
        PolicyName::NoControl,
        PolicyName::RandomCv,
        PolicyName::Trained,
        PolicyName::GnnFlat,
        PolicyName::UniformAttention,
        PolicyName::NoEdgeFeatures,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::NoControl => "no-control",
            PolicyName::RandomCv => "random-cv",
            PolicyName::Trained => "trained",
            PolicyName::GnnFlat => "gnn-flat",
            PolicyName::UniformAttention => "uniform-attention",
            PolicyName::NoEdgeFeatures => "no-edge-features",
        }
    }

    /// Whether the policy needs network parameters.
    pub fn needs_checkpoint(self) -> bool {
        !matches!(self, PolicyName::NoControl | PolicyName::RandomCv)
    }

    /// The network configuration this variant runs with.
    pub fn configure(self, base: &PolicyConfig) -> PolicyConfig {
        let mut c = base.clone();
        match self {
            PolicyName::GnnFlat => c.hierarchical = false,
            PolicyName::UniformAttention => c.uniform_attention = true,
            PolicyName::NoEdgeFeatures => c.edge_features = false,
            _ => {}
        }
        c
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyName {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| HarnessError::UnknownPolicy {
                name: s.to_string(),
                valid: Self::valid_names(),
            })
    }
}

/// A scenario family with its own episode count.
#[derive(Debug, Clone, PartialEq)]
pub struct Bucket {
    pub name: String,
    pub n_range: (usize, usize),
    pub rho_range: (f64, f64),
    pub episodes: usize,
}

impl Bucket {
    pub fn new(name: &str, n_range: (usize, usize), rho_range: (f64, f64), episodes: usize) -> Self {
        Self {
            name: name.to_string(),
            n_range,
            rho_range,
            episodes,
        }
    }
}

/// The `default` suite: the desk evaluation mix followed by the three
/// curriculum stages, `episodes` scenarios each.
pub fn default_buckets(episodes: usize) -> Vec<Bucket> {
    let mut buckets = vec![Bucket::new("desk", (6, 12), (0.5, 1.0), episodes)];
    let schedule = CurriculumSchedule::paper(crate::trainer::curriculum::REFERENCE_EPISODES, true);
    for (i, s) in schedule.stages.iter().enumerate() {
        buckets.push(Bucket::new(
            &format!("stage{}", i + 1),
            s.n_range,
            s.rho_range,
            episodes,
        ));
    }
    buckets
}

/// Scenario lists for each bucket. The first bucket draws from `seed`
/// directly, so a single-bucket evaluation matches
/// [`paired_scenarios`]`(base, seed, ..)`; later buckets use derived seeds.
pub fn bucket_scenarios(base: &EpisodeConfig, seed: u64, buckets: &[Bucket]) -> Vec<Vec<EpisodeConfig>> {
    buckets
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let master = if i == 0 {
                seed
            } else {
                derive_seed(seed, tags::EVAL, 1 << 32 | i as u64)
            };
            paired_scenarios(base, master, b.episodes, b.n_range, b.rho_range)
        })
        .collect()
}

/// Builds the network for `name` and loads `path` into it.
pub fn load_policy(name: PolicyName, base: &PolicyConfig, path: &Path) -> Result<Policy> {
    let mut policy = Policy::new(name.configure(base), 0);
    checkpoint::load(path, &mut policy)?;
    Ok(policy)
}

/// Evaluates one policy over every bucket. Network variants require
/// `policy`, whose configuration is adjusted to the variant.
pub fn run_baseline(
    name: PolicyName,
    policy: Option<&Policy>,
    base: &EpisodeConfig,
    reward: &RewardConfig,
    seed: u64,
    buckets: &[Bucket],
) -> Result<EvalReport> {
    let variant = match (name.needs_checkpoint(), policy) {
        (false, _) => None,
        (true, Some(p)) => {
            let mut v = p.clone();
            v.config = name.configure(&p.config);
            Some(v)
        }
        (true, None) => return Err(HarnessError::Usage(format!("policy `{name}` needs a checkpoint"))),
    };
    let driver = match (name, &variant) {
        (PolicyName::NoControl, _) => Driver::NoControl,
        (PolicyName::RandomCv, _) => Driver::RandomCv,
        (_, Some(policy)) => Driver::Policy {
            policy,
            mode: ActMode::Deterministic,
        },
        (_, None) => unreachable!("network variants always carry a policy"),
    };
    let scenarios = bucket_scenarios(base, seed, buckets);
    let mut reports = Vec::with_capacity(buckets.len());
    for (b, list) in buckets.iter().zip(&scenarios) {
        let episodes = evaluate(list, reward, driver)?;
        reports.push(BucketReport::new(&b.name, b.n_range, b.rho_range, episodes));
    }
    Ok(EvalReport {
        policy: name.as_str().to_string(),
        master_seed: seed,
        buckets: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip_and_unknown_lists_valid() {
        for p in PolicyName::ALL {
            assert_eq!(p.as_str().parse::<PolicyName>().unwrap(), p);
        }
        let err = "maac".parse::<PolicyName>().unwrap_err();
        let text = err.to_string();
        for p in PolicyName::ALL {
            assert!(text.contains(p.as_str()), "{text}");
        }
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn variants_toggle_one_flag_each() {
        let base = PolicyConfig::default();
        assert_eq!(PolicyName::Trained.configure(&base), base);
        assert!(!PolicyName::GnnFlat.configure(&base).hierarchical);
        assert!(PolicyName::UniformAttention.configure(&base).uniform_attention);
        assert!(!PolicyName::NoEdgeFeatures.configure(&base).edge_features);
    }

    #[test]
    fn default_suite_buckets_cover_the_stages() {
        let b = default_buckets(3);
        assert_eq!(b.len(), 4);
        assert_eq!(b[1].n_range, (6, 9));
        assert_eq!(b[3].rho_range, (0.0, 0.33));
        let sc = bucket_scenarios(&EpisodeConfig::default(), 5, &b);
        assert!(sc.iter().all(|s| s.len() == 3));
        assert_eq!(
            sc[0],
            paired_scenarios(&EpisodeConfig::default(), 5, 3, (6, 12), (0.5, 1.0))
        );
        assert_ne!(sc[1][0].seed, sc[2][0].seed);
    }

    #[test]
    fn paired_reports_share_initial_worlds() {
        let base = EpisodeConfig {
            max_steps: 40,
            ..Default::default()
        };
        let buckets = [Bucket::new("a", (6, 8), (0.5, 1.0), 3)];
        let reward = RewardConfig::default();
        let policy = Policy::new(PolicyConfig::default(), 2);
        let none = run_baseline(PolicyName::NoControl, None, &base, &reward, 9, &buckets).unwrap();
        let flat = run_baseline(PolicyName::GnnFlat, Some(&policy), &base, &reward, 9, &buckets).unwrap();
        assert_eq!(none.buckets[0].seeds, flat.buckets[0].seeds);
        assert_eq!(none.buckets[0].world_hashes, flat.buckets[0].world_hashes);
        assert_eq!(flat.policy, "gnn-flat");
        assert_eq!(none.buckets[0].summary.episodes, 3);
        assert!(run_baseline(PolicyName::Trained, None, &base, &reward, 9, &buckets).is_err());
    }
}
