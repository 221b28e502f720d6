//! Round-based simulation, regret accounting and batch execution.

mod batch;
mod regret;
mod world;

use std::collections::BTreeSet;

pub use batch::{
    consensus_bias_monte_carlo, run_batch, run_batch_with, selection_frequency_by_stage, AggregateResult,
};
pub use regret::{pseudo_regret, resilient_bound, stage_of, ucb1_bound, BoundTracker, ResilientBound};
pub use world::{simulate_run, RunOptions, RunResult, World};

use crate::adversary::AttackSpec;
use crate::bandit::{validate_kappa, ArmEnvironment};
use crate::error::{Error, Result};
use crate::policies::PolicySpec;
use crate::topology::GraphModel;

/// A fully validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub env: ArmEnvironment,
    pub graph: GraphModel,
    pub num_agents: usize,
    pub byzantine: BTreeSet<usize>,
    /// One consistency parameter per agent.
    pub kappa: Vec<f64>,
    pub f: usize,
    pub policy: PolicySpec,
    pub attack: AttackSpec,
    pub horizon: u64,
    pub runs: usize,
    pub root_seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_agents == 0 {
            return Err(Error::config("network needs at least one agent"));
        }
        if let Some(&b) = self.byzantine.iter().find(|&&b| b >= self.num_agents) {
            return Err(Error::config(format!("byzantine agent {b} outside 0..{}", self.num_agents)));
        }
        if self.byzantine.len() == self.num_agents {
            return Err(Error::config("at least one agent must be normal"));
        }
        if self.kappa.len() != self.num_agents {
            return Err(Error::config(format!(
                "{} kappa values for {} agents",
                self.kappa.len(),
                self.num_agents
            )));
        }
        for &k in &self.kappa {
            validate_kappa(k)?;
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be >= 1"));
        }
        if self.runs == 0 {
            return Err(Error::config("runs must be >= 1"));
        }
        self.graph.validate(self.num_agents)?;
        self.policy.validate()?;
        self.attack.validate(self.env.num_arms())?;
        let consensus_policy = matches!(self.policy, PolicySpec::RunningConsensusTrimmed);
        let consensus_attack = matches!(self.attack, AttackSpec::ConsensusConstant { .. });
        if consensus_attack && !consensus_policy {
            return Err(Error::config(
                "consensus-constant attack only applies to the running-consensus policy",
            ));
        }
        if consensus_policy && !(consensus_attack || self.attack == AttackSpec::Honest) {
            return Err(Error::config(
                "running-consensus policy exchanges estimates, not (count, mean) reports; use the consensus-constant or honest attack",
            ));
        }
        Ok(())
    }

    pub fn normal_agents(&self) -> Vec<usize> {
        (0..self.num_agents).filter(|i| !self.byzantine.contains(i)).collect()
    }

    pub fn is_byzantine(&self) -> Vec<bool> {
        (0..self.num_agents).map(|i| self.byzantine.contains(&i)).collect()
    }
}
