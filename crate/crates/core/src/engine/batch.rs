//! Independent runs in parallel, aggregated deterministically in run order.

use rayon::prelude::*;

use super::regret::{stage_of, ucb1_bound, ResilientBound};
use super::world::{simulate_run, RunOptions, RunResult};
use super::ExperimentConfig;
use crate::error::{Error, Result};

/// Runs are simulated in chunks of this size so memory stays bounded.
const CHUNK: usize = 64;

/// Mean and population standard deviation over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub normal_agents: Vec<usize>,
    pub runs: usize,
    pub horizon: u64,
    /// `[h][t - 1]` for each normal agent.
    pub agent_mean: Vec<Vec<f64>>,
    pub agent_std: Vec<Vec<f64>>,
    /// Regret averaged over normal agents, then over runs.
    pub network_mean: Vec<f64>,
    pub network_std: Vec<f64>,
    /// Single-agent UCB1 bound at each `t`.
    pub ucb1_curve: Vec<f64>,
    /// Plain resilient bound, averaged over normal agents and runs.
    pub resilient_curve: Vec<f64>,
    /// `[h][k][s]`: share of stage-`s` pulls that went to arm `k`, averaged over runs.
    pub stage_frequency: Vec<Vec<[f64; 3]>>,
    /// Rounds that violated the Byzantine budget, per run.
    pub budget_violations: Vec<u64>,
    /// `[run][h]`: bounds at the horizon.
    pub bounds: Vec<Vec<ResilientBound>>,
    /// `[run][h]`: final cumulative regret.
    pub final_regret: Vec<Vec<f64>>,
}

impl AggregateResult {
    pub fn final_network_mean(&self) -> f64 {
        self.network_mean.last().copied().unwrap_or(0.0)
    }
}

struct Welford {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(len: usize) -> Self {
        Self { n: 0.0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    fn push(&mut self, xs: &[f64]) {
        self.n += 1.0;
        for ((mean, m2), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(xs) {
            let d = x - *mean;
            *mean += d / self.n;
            *m2 += d * (x - *mean);
        }
    }

    fn finish(self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n.max(1.0);
        let std = self.m2.iter().map(|m2| (m2 / n).max(0.0).sqrt()).collect();
        (self.mean, std)
    }
}

/// Converts stage pull counts into per-stage arm frequencies.
pub fn selection_frequency_by_stage(stage_counts: &[[u64; 3]], horizon: u64) -> Vec<[f64; 3]> {
    let mut len = [0u64; 3];
    for t in 1..=horizon {
        len[stage_of(t, horizon)] += 1;
    }
    stage_counts
        .iter()
        .map(|c| std::array::from_fn(|s| if len[s] == 0 { 0.0 } else { c[s] as f64 / len[s] as f64 }))
        .collect()
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))
}

/// Simulates runs `0..runs` with `workers` threads (0 = all cores), calling
/// `sink` on each result in run order.
fn for_each_run(
    cfg: &ExperimentConfig,
    runs: usize,
    options: &RunOptions,
    workers: usize,
    mut sink: impl FnMut(RunResult) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    let pool = pool(workers)?;
    let mut start = 0;
    while start < runs {
        let end = (start + CHUNK).min(runs);
        let chunk: Vec<Result<RunResult>> =
            pool.install(|| (start..end).into_par_iter().map(|r| simulate_run(cfg, r, options)).collect());
        for result in chunk {
            sink(result?)?;
        }
        start = end;
    }
    Ok(())
}

pub fn run_batch(cfg: &ExperimentConfig, workers: usize) -> Result<AggregateResult> {
    run_batch_with(cfg, &RunOptions::default(), workers)
}

pub fn run_batch_with(cfg: &ExperimentConfig, options: &RunOptions, workers: usize) -> Result<AggregateResult> {
    let horizon = cfg.horizon as usize;
    let normal = cfg.normal_agents();
    let m = cfg.env.num_arms();
    let h = normal.len();

    let mut agents: Vec<Welford> = (0..h).map(|_| Welford::new(horizon)).collect();
    let mut network = Welford::new(horizon);
    let mut bound_sum = vec![0.0; horizon];
    let mut freq_sum = vec![vec![[0.0; 3]; m]; h];
    let mut budget_violations = Vec::with_capacity(cfg.runs);
    let mut bounds = Vec::with_capacity(cfg.runs);
    let mut final_regret = Vec::with_capacity(cfg.runs);
    let mut avg = vec![0.0; horizon];

    for_each_run(cfg, cfg.runs, options, workers, |run| {
        avg.iter_mut().for_each(|x| *x = 0.0);
        for (a, (regret, curve)) in run.regret.iter().zip(&run.bound_curve).enumerate() {
            agents[a].push(regret);
            for t in 0..horizon {
                avg[t] += regret[t] / h as f64;
                bound_sum[t] += curve[t] / h as f64;
            }
            for (k, freq) in selection_frequency_by_stage(&run.stage_counts[a], cfg.horizon).iter().enumerate() {
                for s in 0..3 {
                    freq_sum[a][k][s] += freq[s];
                }
            }
        }
        network.push(&avg);
        budget_violations.push(run.budget_violation_rounds);
        final_regret.push((0..h).map(|a| run.final_regret(a)).collect());
        bounds.push(run.bounds);
        Ok(())
    })?;

    let runs = cfg.runs as f64;
    let (agent_mean, agent_std) = agents.into_iter().map(Welford::finish).unzip();
    let (network_mean, network_std) = network.finish();
    let gaps = cfg.env.gaps();
    Ok(AggregateResult {
        normal_agents: normal,
        runs: cfg.runs,
        horizon: cfg.horizon,
        agent_mean,
        agent_std,
        network_mean,
        network_std,
        ucb1_curve: (1..=cfg.horizon).map(|t| ucb1_bound(gaps, t)).collect(),
        resilient_curve: bound_sum.into_iter().map(|x| x / runs).collect(),
        stage_frequency: freq_sum
            .into_iter()
            .map(|arms| arms.into_iter().map(|f| f.map(|x| x / runs)).collect())
            .collect(),
        budget_violations,
        bounds,
        final_regret,
    })
}

/// Mean running-consensus estimate of `(agent, arm)` at each checkpoint time,
/// over `runs` independent runs.
pub fn consensus_bias_monte_carlo(
    cfg: &ExperimentConfig,
    runs: usize,
    agent: usize,
    arm: usize,
    checkpoints: &[u64],
    workers: usize,
) -> Result<Vec<f64>> {
    if let Some(&c) = checkpoints.iter().find(|&&c| c > cfg.horizon) {
        return Err(Error::config(format!("checkpoint {c} beyond horizon {}", cfg.horizon)));
    }
    let options = RunOptions { record_consensus: Some((agent, arm)), ..RunOptions::default() };
    let mut sums = vec![0.0; checkpoints.len()];
    for_each_run(cfg, runs, &options, workers, |run| {
        let trace = run.consensus_trace.expect("trace requested");
        for (s, &c) in sums.iter_mut().zip(checkpoints) {
            *s += trace[c as usize];
        }
        Ok(())
    })?;
    Ok(sums.into_iter().map(|s| s / runs.max(1) as f64).collect())
}
