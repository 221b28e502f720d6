//! Property suites behind the `verify` command.

use std::collections::BTreeSet;
use std::fmt;

use byzbandit_core::adversary::AttackSpec;
use byzbandit_core::bandit::{initialize_agent_with, ArmEnvironment};
use byzbandit_core::engine::{consensus_bias_monte_carlo, run_batch, ucb1_bound, ExperimentConfig};
use byzbandit_core::policies::PolicySpec;
use byzbandit_core::resilience::oracle::trimmed_mean_oracle;
use byzbandit_core::resilience::{
    as_set, consistency_filter, filter_pipeline, filter_summary, trimmed_mean_filter, Report,
};
use byzbandit_core::rng::{stream, Purpose};
use byzbandit_core::topology::{degree_requirement_probability, DirectedGraph, GraphModel};
use clap::ValueEnum;
use rand::Rng;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Filters,
    Counterexample,
    Bounds,
    All,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn run_suite(suite: Suite, workers: usize) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    if matches!(suite, Suite::Filters | Suite::All) {
        report.checks.extend(filters(100_000, 0xF117));
    }
    if matches!(suite, Suite::Counterexample | Suite::All) {
        report.checks.extend(counterexample(10_000, workers)?);
    }
    if matches!(suite, Suite::Bounds | Suite::All) {
        report.checks.extend(bounds(workers)?);
    }
    Ok(report)
}

/// Randomized filter invariants over `cases` inputs.
pub fn filters(cases: usize, seed: u64) -> Vec<Check> {
    let mut rng = stream(seed, Purpose::Run, &[]);
    let mut g_bad = 0usize;
    let mut g_iff_bad = 0usize;
    let mut size_bad = 0usize;
    let mut oracle_bad = 0usize;
    let mut consistency_bad = 0usize;
    let mut summary_bad = 0usize;
    let mut max_g = 0.0f64;
    let mut scratch = Vec::new();

    for _ in 0..cases {
        let n_reports = rng.random_range(0..=10usize);
        let f = rng.random_range(0..=3usize);
        let kappa = 1.0 + rng.random::<f64>();
        let self_count = rng.random_range(1..=50u64);
        // coarse means make (mean, id) ties common
        let coarse = rng.random_bool(0.3);
        let reports: Vec<Report> = (0..n_reports)
            .map(|j| {
                let mean: f64 = rng.random();
                let mean = if coarse { (mean * 5.0).floor() / 5.0 } else { mean };
                Report::new(j, 0, rng.random_range(1..=60u64), mean)
            })
            .collect();
        let self_mean: f64 = rng.random();

        let a = consistency_filter(self_count, kappa, &reports);
        let expected_a: Vec<usize> = reports
            .iter()
            .filter(|r| kappa * r.count as f64 >= self_count as f64)
            .map(|r| r.sender)
            .collect();
        consistency_bad += usize::from(a != expected_a);

        let b = trimmed_mean_filter(&a, &reports, f);
        let values: Vec<(usize, f64)> = a.iter().map(|&j| (j, reports[j].mean)).collect();
        oracle_bad += usize::from(as_set(&b) != trimmed_mean_oracle(&values, f));
        size_bad += usize::from(b.len() != a.len().saturating_sub(2 * f));

        let mut agent = initialize_agent_with(0, 1, kappa, |_| Ok(self_mean)).expect("valid agent");
        for _ in 1..self_count {
            agent.record_pull(0, self_mean).expect("reward in range");
        }
        let outcome = filter_pipeline(&agent, 0, &reports, f);
        max_g = max_g.max(outcome.g);
        g_bad += usize::from(!(outcome.g > 0.0 && outcome.g <= 1.0));
        g_iff_bad += usize::from((outcome.g < 1.0) != !outcome.b_set.is_empty());
        size_bad += usize::from(outcome.b_set.len() != outcome.a_set.len().saturating_sub(2 * f));

        let s = filter_summary(agent.count(0), agent.mean(0), kappa, &reports, f, &mut scratch);
        summary_bad += usize::from(
            s.a_len != outcome.a_set.len()
                || s.b_len != outcome.b_set.len()
                || s.g != outcome.g
                || (s.z - outcome.z).abs() > 1e-12,
        );
    }

    let zero = |name: &str, bad: usize| Check::new(name, bad == 0, format!("{bad} violations in {cases} cases"));
    vec![
        zero("filters: consistency filter keeps exactly kappa*n_j >= n_i", consistency_bad),
        zero("filters: trimmed mean equals brute-force oracle", oracle_bad),
        zero("filters: |B| = max(|A| - 2f, 0)", size_bad),
        Check::new(
            "filters: 0 < g <= 1",
            g_bad == 0,
            format!("{g_bad} violations, max g {max_g}"),
        ),
        zero("filters: g < 1 iff B non-empty", g_iff_bad),
        zero("filters: streaming summary equals full pipeline", summary_bad),
    ]
}

/// Four agents on a complete graph, agent 0 Byzantine broadcasting 1/3 into a
/// running-consensus network with one Bernoulli(0.5) arm.
pub fn counterexample_config(horizon: u64) -> ExperimentConfig {
    ExperimentConfig {
        env: ArmEnvironment::bernoulli(&[0.5]).expect("valid arm"),
        graph: GraphModel::fixed(DirectedGraph::complete(4)),
        num_agents: 4,
        byzantine: BTreeSet::from([0]),
        kappa: vec![1.0; 4],
        f: 1,
        policy: PolicySpec::RunningConsensusTrimmed,
        attack: AttackSpec::ConsensusConstant { values: vec![1.0 / 3.0] },
        horizon,
        runs: 1,
        root_seed: 24,
    }
}

/// The two-arm variant used to exhibit linear regret.
pub fn linear_regret_config() -> ExperimentConfig {
    let mut cfg = counterexample_config(10_000);
    cfg.env = ArmEnvironment::bernoulli(&[0.5, 0.45]).expect("valid arms");
    cfg.attack = AttackSpec::ConsensusConstant {
        values: vec![1.0 / 3.0, 0.9],
    };
    cfg.runs = 20;
    cfg
}

pub fn counterexample(runs: usize, workers: usize) -> Result<Vec<Check>> {
    let target = 11.0 / 24.0;
    let checkpoints = [1u64, 10, 100, 1000];
    let cfg = counterexample_config(1000);
    let z = consensus_bias_monte_carlo(&cfg, runs, 1, 0, &checkpoints, workers)?;
    let mut checks = vec![Check::new(
        "counterexample: E[z(1)] = 11/24",
        (z[0] - target).abs() <= 0.005,
        format!("estimate {:.5}, target {target:.5}, |diff| {:.5} <= 0.005", z[0], (z[0] - target).abs()),
    )];
    for (t, zt) in checkpoints.iter().zip(&z) {
        let bias = 0.5 - zt;
        checks.push(Check::new(
            format!("counterexample: bias at t={t} >= 1/24 - 0.01"),
            *zt <= target + 0.01,
            format!("E[z] {zt:.5}, bias {bias:.5}, margin {:.5}", bias - (1.0 / 24.0 - 0.01)),
        ));
    }
    let linear = linear_regret_config();
    let agg = run_batch(&linear, workers)?;
    let reference = 0.5 * 0.05 * linear.horizon as f64;
    checks.push(Check::new(
        "counterexample: regret at T exceeds half the always-suboptimal line",
        agg.final_network_mean() > reference,
        format!("regret {:.1} > {reference:.1}", agg.final_network_mean()),
    ));
    Ok(checks)
}

fn binomial(n: u64, k: u64) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * (n + 1 - i) as f64 / i as f64)
}

/// Five agents, agent 0 Byzantine with a constant broadcast, ER(0.8) graph.
pub fn five_agent_config() -> ExperimentConfig {
    ExperimentConfig {
        env: ArmEnvironment::bernoulli(&[0.5, 0.45, 0.4, 0.3]).expect("valid arms"),
        graph: GraphModel::ErRandomFixed { q: 0.8 },
        num_agents: 5,
        byzantine: BTreeSet::from([0]),
        kappa: vec![1.0, 1.0, 1.2, 1.5, 1.8],
        f: 1,
        policy: PolicySpec::ResilientUcb { tuned: false },
        attack: AttackSpec::ConstantBroadcast {
            means: vec![0.4, 0.5, 0.4, 0.3],
        },
        horizon: 10_000,
        runs: 50,
        root_seed: 2023,
    }
}

pub fn bounds(workers: usize) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let gaps = [0.0, 0.05, 0.1, 0.2];
    let ln_t = 10_000f64.ln();
    let expected = 8.0 * ln_t * (1.0 / 0.05 + 1.0 / 0.1 + 1.0 / 0.2)
        + (1.0 + std::f64::consts::PI.powi(2) / 3.0) * (0.05 + 0.1 + 0.2);
    let got = ucb1_bound(&gaps, 10_000);
    checks.push(Check::new(
        "bounds: UCB1 bound fixture",
        (got - expected).abs() < 1e-9 && (got - 2580.4).abs() < 0.05,
        format!("{got:.4} vs direct {expected:.4} (~2580.4)"),
    ));

    let mut worst = 0.0f64;
    for q in [0.1f64, 0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 1.0] {
        let direct = (7..=9u64)
            .map(|i| binomial(9, i) * q.powi(i as i32) * (1.0 - q).powi(9 - i as i32))
            .sum::<f64>()
            .powi(10);
        let closed = degree_requirement_probability(10, 2, q)?;
        let rel = if direct == 0.0 { closed.abs() } else { ((closed - direct) / direct).abs() };
        worst = worst.max(rel);
    }
    checks.push(Check::new(
        "bounds: 3f+1 degree probability matches direct evaluation",
        worst < 1e-12,
        format!("worst relative error {worst:.3e}"),
    ));

    let cfg = five_agent_config();
    let agg = run_batch(&cfg, workers)?;
    let ucb1 = ucb1_bound(cfg.env.gaps(), cfg.horizon);
    for (h, &agent) in agg.normal_agents.iter().enumerate() {
        let regret = agg.agent_mean[h].last().copied().unwrap_or(0.0);
        let bound = agg.bounds.iter().map(|b| b[h].plain).sum::<f64>() / agg.runs as f64;
        checks.push(Check::new(
            format!("bounds: agent {agent} mean regret below its bound and UCB1"),
            regret < bound && regret < ucb1,
            format!("regret {regret:.1} < bound {bound:.1}, < UCB1 {ucb1:.1}"),
        ));
    }
    Ok(checks)
}
