//! Arm environments, reward sampling, and per-agent local statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};

/// A reward sampler supported on `[0, 1]` with a known mean.
///
/// Samples outside `[0, 1]` are clamped by the environment.
pub trait BoundedSampler: Send + Sync {
    fn mean(&self) -> f64;
    fn sample(&self, rng: &mut dyn rand::RngCore) -> f64;
}

#[derive(Clone)]
pub enum RewardDistribution {
    Bernoulli(f64),
    PointMass(f64),
    Uniform { low: f64, high: f64 },
    Beta { alpha: f64, beta: f64 },
    /// Any sampler with a declared mean; draws are clamped to `[0, 1]`.
    Generic(Arc<dyn BoundedSampler>),
}

impl fmt::Debug for RewardDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bernoulli(p) => write!(f, "Bernoulli({p})"),
            Self::PointMass(v) => write!(f, "PointMass({v})"),
            Self::Uniform { low, high } => write!(f, "Uniform({low}, {high})"),
            Self::Beta { alpha, beta } => write!(f, "Beta({alpha}, {beta})"),
            Self::Generic(s) => write!(f, "Generic(mean = {})", s.mean()),
        }
    }
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl RewardDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Bernoulli(p) if !in_unit(p) => {
                Err(Error::config(format!("bernoulli parameter {p} outside [0, 1]")))
            }
            Self::PointMass(v) if !in_unit(v) => {
                Err(Error::config(format!("point mass {v} outside [0, 1]")))
            }
            Self::Uniform { low, high } if !(in_unit(low) && in_unit(high) && low <= high) => Err(
                Error::config(format!("uniform support [{low}, {high}] not inside [0, 1]")),
            ),
            Self::Beta { alpha, beta } if !(alpha > 0.0 && beta > 0.0) => Err(Error::config(
                format!("beta parameters ({alpha}, {beta}) must be positive"),
            )),
            Self::Generic(ref s) if !in_unit(s.mean()) => Err(Error::config(format!(
                "declared mean {} outside [0, 1]",
                s.mean()
            ))),
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Bernoulli(p) => p,
            Self::PointMass(v) => v,
            Self::Uniform { low, high } => 0.5 * (low + high),
            Self::Beta { alpha, beta } => alpha / (alpha + beta),
            Self::Generic(ref s) => s.mean(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Bernoulli(p) => {
                // one uniform per draw regardless of p keeps streams aligned
                let u: f64 = rng.random();
                if u < p {
                    1.0
                } else {
                    0.0
                }
            }
            Self::PointMass(v) => v,
            Self::Uniform { low, high } => {
                let u: f64 = rng.random();
                low + (high - low) * u
            }
            Self::Beta { alpha, beta } => Beta::new(alpha, beta)
                .expect("validated beta parameters")
                .sample(rng),
            Self::Generic(ref s) => {
                let mut adapter = RngAdapter(rng);
                s.sample(&mut adapter).clamp(0.0, 1.0)
            }
        }
    }
}

struct RngAdapter<'a, R: Rng + ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> rand::RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// The `M` arms, their means and gaps.
///
/// Agents may carry their own distributions per arm (`overrides`) as long as
/// the means agree with the shared ones.
#[derive(Debug, Clone)]
pub struct ArmEnvironment {
    arms: Vec<RewardDistribution>,
    means: Vec<f64>,
    gaps: Vec<f64>,
    overrides: BTreeMap<usize, Vec<RewardDistribution>>,
}

impl ArmEnvironment {
    pub fn new(arms: Vec<RewardDistribution>) -> Result<Self> {
        if arms.is_empty() {
            return Err(Error::config("environment needs at least one arm"));
        }
        for arm in &arms {
            arm.validate()?;
        }
        let means: Vec<f64> = arms.iter().map(RewardDistribution::mean).collect();
        let gaps = compute_gaps(&means);
        Ok(Self {
            arms,
            means,
            gaps,
            overrides: BTreeMap::new(),
        })
    }

    pub fn bernoulli(means: &[f64]) -> Result<Self> {
        Self::new(means.iter().map(|&p| RewardDistribution::Bernoulli(p)).collect())
    }

    /// Gives `agent` its own per-arm distributions. Means must match the
    /// shared means to within 1e-12.
    pub fn with_override(mut self, agent: usize, arms: Vec<RewardDistribution>) -> Result<Self> {
        if arms.len() != self.arms.len() {
            return Err(Error::config(format!(
                "override for agent {agent} has {} arms, expected {}",
                arms.len(),
                self.arms.len()
            )));
        }
        for (k, arm) in arms.iter().enumerate() {
            arm.validate()?;
            if (arm.mean() - self.means[k]).abs() > 1e-12 {
                return Err(Error::config(format!(
                    "override for agent {agent} arm {k} has mean {} but the arm mean is {}",
                    arm.mean(),
                    self.means[k]
                )));
            }
        }
        self.overrides.insert(agent, arms);
        Ok(self)
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn arms(&self) -> &[RewardDistribution] {
        &self.arms
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    /// Index of the arm with the largest mean (lowest index on ties).
    pub fn best_arm(&self) -> usize {
        self.gaps.iter().position(|&g| g == 0.0).unwrap_or(0)
    }

    /// Largest gap, i.e. the gap of the worst arm.
    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(0.0, f64::max)
    }

    pub fn distribution_for(&self, agent: usize, arm: usize) -> &RewardDistribution {
        match self.overrides.get(&agent) {
            Some(arms) => &arms[arm],
            None => &self.arms[arm],
        }
    }

    pub fn overrides(&self) -> &BTreeMap<usize, Vec<RewardDistribution>> {
        &self.overrides
    }
}

/// Draws one reward from arm `arm` of the shared distributions.
pub fn sample_reward<R: Rng + ?Sized>(env: &ArmEnvironment, arm: usize, rng: &mut R) -> Result<f64> {
    let dist = env.arms.get(arm).ok_or_else(|| {
        Error::config(format!("arm {arm} out of range for {} arms", env.num_arms()))
    })?;
    Ok(dist.sample(rng))
}

/// Like [`sample_reward`] but honours per-agent overrides.
pub fn sample_reward_for<R: Rng + ?Sized>(
    env: &ArmEnvironment,
    agent: usize,
    arm: usize,
    rng: &mut R,
) -> Result<f64> {
    if arm >= env.num_arms() {
        return Err(Error::config(format!(
            "arm {arm} out of range for {} arms",
            env.num_arms()
        )));
    }
    Ok(env.distribution_for(agent, arm).sample(rng))
}

/// `gaps[k] = max(means) - means[k]`. Arms need not be sorted.
pub fn compute_gaps(means: &[f64]) -> Vec<f64> {
    let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    means.iter().map(|&m| best - m).collect()
}

pub fn validate_kappa(kappa: f64) -> Result<()> {
    if (1.0..2.0).contains(&kappa) {
        Ok(())
    } else {
        Err(Error::config(format!("kappa {kappa} outside [1, 2)")))
    }
}

/// Local statistics of one agent.
///
/// Means are stored as `(sum, count)` and divided on read.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub agent_id: usize,
    counts: Vec<u64>,
    sums: Vec<f64>,
    kappa: f64,
    /// Running-consensus estimate, only used by the consensus policy.
    pub consensus_estimate: Option<Vec<f64>>,
}

impl AgentState {
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, arm: usize) -> u64 {
        self.counts[arm]
    }

    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    pub fn mean(&self, arm: usize) -> f64 {
        self.sums[arm] / self.counts[arm] as f64
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|k| self.mean(k)).collect()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn num_arms(&self) -> usize {
        self.counts.len()
    }

    pub fn total_pulls(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds one observation of `arm`.
    pub fn record_pull(&mut self, arm: usize, reward: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&reward) {
            return Err(Error::invariant(
                self.total_pulls(),
                self.agent_id,
                arm,
                format!("reward {reward} outside [0, 1]"),
            ));
        }
        if arm >= self.counts.len() {
            return Err(Error::config(format!("arm {arm} out of range")));
        }
        self.counts[arm] += 1;
        self.sums[arm] += reward;
        Ok(())
    }
}

/// Builds an agent that has sampled every arm exactly once.
///
/// `draw(arm)` supplies the initial reward of each arm in index order.
pub fn initialize_agent_with<F>(agent_id: usize, num_arms: usize, kappa: f64, mut draw: F) -> Result<AgentState>
where
    F: FnMut(usize) -> Result<f64>,
{
    validate_kappa(kappa)?;
    let mut sums = Vec::with_capacity(num_arms);
    for k in 0..num_arms {
        let r = draw(k)?;
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::invariant(0, agent_id, k, format!("reward {r} outside [0, 1]")));
        }
        sums.push(r);
    }
    Ok(AgentState {
        agent_id,
        counts: vec![1; num_arms],
        sums,
        kappa,
        consensus_estimate: None,
    })
}

/// Builds an agent by sampling each arm once from a single stream.
pub fn initialize_agent<R: Rng + ?Sized>(
    agent_id: usize,
    env: &ArmEnvironment,
    kappa: f64,
    rng: &mut R,
) -> Result<AgentState> {
    initialize_agent_with(agent_id, env.num_arms(), kappa, |k| {
        sample_reward_for(env, agent_id, k, rng)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn point_mass_and_bernoulli_boundaries() {
        let env = ArmEnvironment::new(vec![
            RewardDistribution::PointMass(0.7),
            RewardDistribution::Bernoulli(1.0),
        ])
        .unwrap();
        let mut rng = stream(1, Purpose::Reward, &[]);
        for _ in 0..100 {
            assert_eq!(sample_reward(&env, 0, &mut rng).unwrap(), 0.7);
            assert_eq!(sample_reward(&env, 1, &mut rng).unwrap(), 1.0);
        }
    }

    #[test]
    fn bernoulli_law_of_large_numbers() {
        let env = ArmEnvironment::bernoulli(&[0.5]).unwrap();
        let mut rng = stream(2024, Purpose::Reward, &[]);
        let n = 100_000;
        let total: f64 = (0..n).map(|_| sample_reward(&env, 0, &mut rng).unwrap()).sum();
        assert!((total / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn arm_out_of_range_is_config_error() {
        let env = ArmEnvironment::bernoulli(&[0.5, 0.2]).unwrap();
        let mut rng = stream(0, Purpose::Reward, &[]);
        assert!(matches!(sample_reward(&env, 2, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_distributions_rejected() {
        assert!(ArmEnvironment::bernoulli(&[1.2]).is_err());
        assert!(ArmEnvironment::new(vec![RewardDistribution::PointMass(-0.1)]).is_err());
        assert!(ArmEnvironment::new(vec![]).is_err());
    }

    #[test]
    fn gaps_against_maximum() {
        let g = compute_gaps(&[0.5, 0.45, 0.4, 0.3]);
        for (a, b) in g.iter().zip([0.0, 0.05, 0.1, 0.2]) {
            assert!(close(*a, b));
        }
        assert_eq!(compute_gaps(&[0.7]), vec![0.0]);
        let g = compute_gaps(&[0.3, 0.9, 0.9]);
        assert!(close(g[0], 0.6) && g[1] == 0.0 && g[2] == 0.0);
    }

    #[test]
    fn environment_means_match_distributions() {
        let env = ArmEnvironment::new(vec![
            RewardDistribution::Bernoulli(0.3),
            RewardDistribution::Uniform { low: 0.2, high: 0.6 },
            RewardDistribution::Beta { alpha: 2.0, beta: 6.0 },
        ])
        .unwrap();
        assert!(close(env.means()[1], 0.4));
        assert!(close(env.means()[2], 0.25));
        assert_eq!(env.best_arm(), 1);
        assert!(env.gaps().iter().all(|&g| g >= 0.0));
    }

    #[test]
    fn overrides_must_share_means() {
        let env = ArmEnvironment::bernoulli(&[0.5, 0.25]).unwrap();
        let ok = env.clone().with_override(
            3,
            vec![
                RewardDistribution::PointMass(0.5),
                RewardDistribution::Uniform { low: 0.0, high: 0.5 },
            ],
        );
        assert!(ok.is_ok());
        let bad = env.with_override(3, vec![RewardDistribution::PointMass(0.4), RewardDistribution::PointMass(0.25)]);
        assert!(bad.is_err());
    }

    #[test]
    fn initialization_samples_each_arm_once() {
        let env = ArmEnvironment::new(
            [0.1, 0.2, 0.3, 0.4].iter().map(|&v| RewardDistribution::PointMass(v)).collect(),
        )
        .unwrap();
        let mut rng = stream(5, Purpose::Reward, &[]);
        let state = initialize_agent(0, &env, 1.0, &mut rng).unwrap();
        assert_eq!(state.counts(), &[1, 1, 1, 1]);
        for (m, v) in state.means().iter().zip([0.1, 0.2, 0.3, 0.4]) {
            assert!(close(*m, v));
        }
    }

    #[test]
    fn distinct_streams_give_distinct_agents() {
        let env = ArmEnvironment::bernoulli(&[0.5; 16]).unwrap();
        let mut r0 = stream(9, Purpose::Reward, &[0]);
        let mut r1 = stream(9, Purpose::Reward, &[1]);
        let a = initialize_agent(0, &env, 1.5, &mut r0).unwrap();
        let b = initialize_agent(1, &env, 1.5, &mut r1).unwrap();
        assert_ne!(a.means(), b.means());
    }

    #[test]
    fn kappa_range_enforced() {
        let env = ArmEnvironment::bernoulli(&[0.5]).unwrap();
        let mut rng = stream(0, Purpose::Reward, &[]);
        assert!(initialize_agent(0, &env, 2.0, &mut rng).is_err());
        assert!(initialize_agent(0, &env, 0.99, &mut rng).is_err());
        assert!(initialize_agent(0, &env, 1.999, &mut rng).is_ok());
    }

    #[test]
    fn record_pull_running_mean() {
        let mut s = initialize_agent_with(0, 2, 1.0, |_| Ok(0.0)).unwrap();
        s.record_pull(0, 1.0).unwrap();
        assert_eq!(s.count(0), 2);
        assert!(close(s.mean(0), 0.5));
        assert_eq!(s.count(1), 1);

        // counts 3, mean 0.4, then 0.8 -> 0.5
        let mut s = initialize_agent_with(0, 1, 1.0, |_| Ok(0.4)).unwrap();
        s.record_pull(0, 0.4).unwrap();
        s.record_pull(0, 0.4).unwrap();
        assert!(close(s.mean(0), 0.4));
        s.record_pull(0, 0.8).unwrap();
        assert!(close(s.mean(0), 0.5));

        let before = s.mean(0);
        s.record_pull(0, before).unwrap();
        assert!(close(s.mean(0), before));
    }

    #[test]
    fn record_pull_rejects_out_of_range_reward() {
        let mut s = initialize_agent_with(0, 1, 1.0, |_| Ok(0.5)).unwrap();
        assert!(matches!(s.record_pull(0, 1.5), Err(Error::Invariant { .. })));
        assert!(s.record_pull(0, f64::NAN).is_err());
        assert_eq!(s.count(0), 1);
    }

    #[test]
    fn all_kinds_stay_in_unit_interval() {
        let env = ArmEnvironment::new(vec![
            RewardDistribution::Bernoulli(0.37),
            RewardDistribution::PointMass(1.0),
            RewardDistribution::Uniform { low: 0.0, high: 1.0 },
            RewardDistribution::Beta { alpha: 0.5, beta: 0.5 },
        ])
        .unwrap();
        let mut rng = stream(77, Purpose::Reward, &[]);
        for i in 0..1_000_000usize {
            let x = sample_reward(&env, i % 4, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&x));
        }
    }

    proptest! {
        #[test]
        fn incremental_mean_matches_history(
            init in 0.0f64..=1.0,
            pulls in proptest::collection::vec((0usize..3, 0.0f64..=1.0), 0..300),
        ) {
            let mut s = initialize_agent_with(0, 3, 1.2, |_| Ok(init)).unwrap();
            let mut history: Vec<Vec<f64>> = vec![vec![init]; 3];
            for &(arm, r) in &pulls {
                s.record_pull(arm, r).unwrap();
                history[arm].push(r);
            }
            for (k, h) in history.iter().enumerate() {
                let direct = h.iter().sum::<f64>() / h.len() as f64;
                prop_assert!((s.mean(k) - direct).abs() < 1e-9);
                prop_assert_eq!(s.count(k) as usize, h.len());
            }
            prop_assert_eq!(s.total_pulls() as usize - 3, pulls.len());
        }
    }
}
