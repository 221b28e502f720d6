//! Byzantine-resilient decentralized multi-armed bandits.
//!
//! Normal agents on a directed (possibly time-varying) graph exchange per-arm
//! `(pull count, sample mean)` reports, discard inconsistent and extreme
//! reports, and select arms with a variance-adjusted UCB rule. Byzantine
//! agents may send arbitrary, per-recipient reports.
//!
//! Module map:
//! - [`bandit`]: arm environments, reward sampling, per-agent statistics.
//! - [`topology`]: fixed and random directed neighbor graphs.
//! - [`resilience`]: consistency filter, trimmed-mean filter, fused estimate,
//!   adjusted variance and confidence bonus.
//! - [`policies`]: arm-selection rules.
//! - [`adversary`]: Byzantine report crafting.
//! - [`engine`]: the synchronous round loop, regret accounting, bounds and
//!   batch execution.

pub mod adversary;
pub mod bandit;
pub mod engine;
pub mod error;
pub mod policies;
pub mod resilience;
pub mod rng;
pub mod topology;

pub use error::{Error, Result};
