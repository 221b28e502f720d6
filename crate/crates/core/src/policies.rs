//! Arm-selection rules.
//!
//! All deterministic rules break ties toward the lowest arm index with strict
//! comparisons (no epsilon).

use rand::Rng;

use crate::bandit::AgentState;
use crate::error::{Error, Result};
use crate::resilience::{bonus_from_log, round_log, FilterOutcome, FilterSummary};

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    /// Filtered estimate plus variance-adjusted bonus.
    ResilientUcb { tuned: bool },
    /// Non-cooperative baseline: ignores every report.
    SingleUcb1,
    /// Argmax of the filtered estimate.
    ResilientGreedy,
    /// Softmax over the three largest filtered estimates.
    SoftmaxTop3 { temperature: f64 },
    /// Running consensus on exchanged estimates with trimming. Kept only to
    /// reproduce its bias under attack; never combined with the filter pipeline.
    RunningConsensusTrimmed,
}

impl PolicySpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::SoftmaxTop3 { temperature } if !(temperature > 0.0 && temperature.is_finite()) => {
                Err(Error::config(format!("softmax temperature {temperature} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// Whether the policy reads neighbor reports through the filter pipeline.
    pub fn uses_filter(&self) -> bool {
        matches!(
            self,
            Self::ResilientUcb { .. } | Self::ResilientGreedy | Self::SoftmaxTop3 { .. }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::ResilientUcb { tuned: false } => "resilient-ucb",
            Self::ResilientUcb { tuned: true } => "resilient-ucb-tuned",
            Self::SingleUcb1 => "single-ucb1",
            Self::ResilientGreedy => "resilient-greedy",
            Self::SoftmaxTop3 { .. } => "softmax-top3",
            Self::RunningConsensusTrimmed => "running-consensus-trimmed",
        }
    }
}

/// Filtered estimate and adjusted variance of one arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmEstimate {
    pub z: f64,
    pub g: f64,
}

impl From<&FilterOutcome> for ArmEstimate {
    fn from(o: &FilterOutcome) -> Self {
        Self { z: o.z, g: o.g }
    }
}

impl From<FilterSummary> for ArmEstimate {
    fn from(s: FilterSummary) -> Self {
        Self { z: s.z, g: s.g }
    }
}

/// First index of the maximum under strict `>`.
pub fn argmax<I: IntoIterator<Item = f64>>(values: I) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (k, v) in values.into_iter().enumerate() {
        if v > best_val {
            best = k;
            best_val = v;
        }
    }
    best
}

/// `argmax_k z_k + C(t, n_k)` with the bonus scaled by `g_k`.
pub fn select_arm_resilient_ucb(estimates: &[ArmEstimate], counts: &[u64], t: u64, tuned: bool) -> Result<usize> {
    if estimates.len() != counts.len() || estimates.is_empty() {
        return Err(Error::config("one estimate per arm required"));
    }
    if let Some(k) = counts.iter().position(|&n| n == 0) {
        return Err(Error::invariant(t, usize::MAX, k, "arm has zero pulls"));
    }
    let log_t = round_log(t);
    Ok(argmax(
        estimates
            .iter()
            .zip(counts)
            .map(|(e, &n)| e.z + bonus_from_log(log_t, n, e.g, tuned)),
    ))
}

/// Classic UCB1 on the agent's own sample means.
pub fn select_arm_single_ucb1(state: &AgentState, t: u64) -> Result<usize> {
    let estimates: Vec<ArmEstimate> = (0..state.num_arms())
        .map(|k| ArmEstimate {
            z: state.mean(k),
            g: 1.0,
        })
        .collect();
    select_arm_resilient_ucb(&estimates, state.counts(), t, false)
}

pub fn select_arm_greedy(z: &[f64]) -> usize {
    argmax(z.iter().copied())
}

/// Indices of the three largest values (all indices when fewer than three),
/// ordered by value descending then index ascending.
pub fn top3(z: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..z.len()).collect();
    idx.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(a.cmp(&b)));
    idx.truncate(3);
    idx
}

/// Softmax probabilities over `top3(z)` at `temperature`.
pub fn softmax_top3_probabilities(z: &[f64], temperature: f64) -> Vec<(usize, f64)> {
    let top = top3(z);
    let zmax = top.iter().map(|&k| z[k]).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = top.iter().map(|&k| ((z[k] - zmax) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    top.into_iter().zip(weights).map(|(k, w)| (k, w / total)).collect()
}

/// Samples an arm among the three largest `z` with probability
/// proportional to `exp(z / temperature)`. Consumes one uniform.
pub fn select_arm_softmax_top3<R: Rng + ?Sized>(z: &[f64], temperature: f64, rng: &mut R) -> usize {
    let probs = softmax_top3_probabilities(z, temperature);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(k, p) in &probs {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.last().map(|&(k, _)| k).unwrap_or(0)
}

/// Drops the `f` largest and `f` smallest received estimates (ties by sender
/// id). Returns nothing when fewer than `2f + 1` arrived.
pub fn trim_consensus_reports(received: &[(usize, f64)], f: usize) -> Vec<f64> {
    if received.len() <= 2 * f {
        return Vec::new();
    }
    let mut sorted = received.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    sorted[f..sorted.len() - f].iter().map(|&(_, z)| z).collect()
}

/// Running-consensus step for one arm: the agent's own estimate is averaged
/// with the retained neighbor estimates and shifted by the change in its
/// sample mean. With nothing retained the estimate only takes the shift.
pub fn running_consensus_update(
    state: &mut AgentState,
    arm: usize,
    retained: &[f64],
    new_mean: f64,
    old_mean: f64,
) -> Result<()> {
    let estimates = state
        .consensus_estimate
        .as_mut()
        .ok_or_else(|| Error::config("agent has no consensus estimate"))?;
    let own = estimates[arm];
    let mixed = (own + retained.iter().sum::<f64>()) / (retained.len() + 1) as f64;
    estimates[arm] = mixed + new_mean - old_mean;
    Ok(())
}
