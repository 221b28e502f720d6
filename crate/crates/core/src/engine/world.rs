//! One simulation run: the synchronous Transmit → Filter → Decide → Update
//! loop.
//!
//! Every report and every decision in round `t` is computed from the state at
//! the start of the round; updates are applied only after all agents have
//! decided.

use rand::Rng;

use super::regret::{stage_of, BoundTracker, ResilientBound};
use super::ExperimentConfig;
use crate::adversary::{
    craft_reports_adaptive, craft_reports_constant, craft_reports_gaussian, AdversaryState, AttackSpec,
    GlobalSnapshot,
};
use crate::bandit::{initialize_agent_with, sample_reward_for, AgentState};
use crate::error::{Error, Result};
use crate::policies::{
    argmax, running_consensus_update, select_arm_greedy, select_arm_resilient_ucb, select_arm_single_ucb1,
    select_arm_softmax_top3, trim_consensus_reports, ArmEstimate, PolicySpec,
};
use crate::resilience::{bonus_from_log, check_outcome, filter_summary, round_log, Report};
use crate::rng::{run_seed, stream, Purpose, StreamRng};
use crate::topology::{validate_byzantine_budget, DirectedGraph, GraphSequence};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Order in which agents are visited within each phase of a round. Must
    /// be a permutation of `0..N`; the trajectory does not depend on it.
    pub evaluation_order: Option<Vec<usize>>,
    /// Discard every neighbor report before filtering.
    pub drop_reports: bool,
    /// Record the running-consensus estimate of `(agent, arm)` for `t = 0..=T`.
    pub record_consensus: Option<(usize, usize)>,
    /// Record every agent's arm at each pull time.
    pub record_arms: bool,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub run_index: usize,
    pub seed: u64,
    pub normal_agents: Vec<usize>,
    /// `regret[h][t - 1]`: cumulative pseudo-regret of `normal_agents[h]` after
    /// pull time `t`.
    pub regret: Vec<Vec<f64>>,
    /// `bound_curve[h][t - 1]`: per-agent regret bound evaluated on the `g`
    /// trace up to `t`.
    pub bound_curve: Vec<Vec<f64>>,
    /// Per normal agent, the bound at the horizon.
    pub bounds: Vec<ResilientBound>,
    /// Final pull counts of every agent (initial pulls included).
    pub final_counts: Vec<Vec<u64>>,
    /// `stage_counts[h][k][s]`: pulls of arm `k` by `normal_agents[h]` in stage `s`.
    pub stage_counts: Vec<Vec<[u64; 3]>>,
    pub budget_violation_rounds: u64,
    /// Gaussian-attack biases per adversary.
    pub adversary_biases: Vec<(usize, Vec<f64>)>,
    pub consensus_trace: Option<Vec<f64>>,
    /// `arm_trace[i][t - 1]`: arm pulled by agent `i` at time `t`.
    pub arm_trace: Option<Vec<Vec<usize>>>,
}

impl RunResult {
    pub fn final_regret(&self, h: usize) -> f64 {
        self.regret[h].last().copied().unwrap_or(0.0)
    }
}

/// Mutable state of one run.
pub struct World<'c> {
    cfg: &'c ExperimentConfig,
    opts: RunOptions,
    run_index: usize,
    seed: u64,
    agents: Vec<AgentState>,
    prev_counts: Vec<Vec<u64>>,
    reward_rngs: Vec<Vec<StreamRng>>,
    policy_rngs: Vec<StreamRng>,
    attack_rngs: Vec<StreamRng>,
    pull_rngs: Vec<StreamRng>,
    adversaries: Vec<Option<AdversaryState>>,
    graphs: GraphSequence,
    is_byz: Vec<bool>,
    normal: Vec<usize>,
    normal_index: Vec<Option<usize>>,
    attacking: bool,
    order: Vec<usize>,
    cum_regret: Vec<f64>,
    regret: Vec<Vec<f64>>,
    trackers: Vec<BoundTracker>,
    bound_curve: Vec<Vec<f64>>,
    stage_counts: Vec<Vec<[u64; 3]>>,
    budget_violations: u64,
    consensus_trace: Option<Vec<f64>>,
    arm_trace: Option<Vec<Vec<usize>>>,
}

impl<'c> World<'c> {
    /// Initializes run `run_index`: every agent samples every arm once.
    pub fn new(cfg: &'c ExperimentConfig, run_index: usize, opts: RunOptions) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.num_agents;
        let m = cfg.env.num_arms();
        let seed = run_seed(cfg.root_seed, run_index as u64);

        let order = match &opts.evaluation_order {
            Some(order) => {
                let mut sorted = order.clone();
                sorted.sort_unstable();
                if sorted != (0..n).collect::<Vec<_>>() {
                    return Err(Error::config("evaluation order must be a permutation of the agents"));
                }
                order.clone()
            }
            None => (0..n).collect(),
        };

        let mut reward_rngs: Vec<Vec<StreamRng>> = (0..n)
            .map(|i| (0..m).map(|k| stream(seed, Purpose::Reward, &[i as u64, k as u64])).collect())
            .collect();
        let policy_rngs = (0..n).map(|i| stream(seed, Purpose::Policy, &[i as u64])).collect();
        let mut attack_rngs: Vec<StreamRng> = (0..n).map(|i| stream(seed, Purpose::Attack, &[i as u64])).collect();
        let pull_rngs = (0..n).map(|i| stream(seed, Purpose::ByzantinePull, &[i as u64])).collect();

        let mut agents = Vec::with_capacity(n);
        for (i, rngs) in reward_rngs.iter_mut().enumerate() {
            let mut state = initialize_agent_with(i, m, cfg.kappa[i], |k| {
                sample_reward_for(&cfg.env, i, k, &mut rngs[k])
            })?;
            if cfg.policy == PolicySpec::RunningConsensusTrimmed {
                state.consensus_estimate = Some(state.means());
            }
            agents.push(state);
        }
        let prev_counts = agents.iter().map(|a| a.counts().to_vec()).collect();

        let is_byz = cfg.is_byzantine();
        let adversaries = (0..n)
            .map(|i| is_byz[i].then(|| AdversaryState::new(i, &cfg.attack, m, &mut attack_rngs[i])))
            .collect();
        let normal = cfg.normal_agents();
        let mut normal_index = vec![None; n];
        for (h, &i) in normal.iter().enumerate() {
            normal_index[i] = Some(h);
        }
        let horizon = cfg.horizon as usize;
        let consensus_trace = match opts.record_consensus {
            Some((agent, arm)) => {
                let z = agents
                    .get(agent)
                    .and_then(|a| a.consensus_estimate.as_ref())
                    .and_then(|z| z.get(arm))
                    .ok_or_else(|| Error::config("consensus trace requested for an agent/arm without an estimate"))?;
                let mut trace = Vec::with_capacity(horizon + 1);
                trace.push(*z);
                Some(trace)
            }
            None => None,
        };
        let arm_trace = opts.record_arms.then(|| vec![Vec::with_capacity(horizon); n]);
        let h = normal.len();

        Ok(Self {
            cfg,
            run_index,
            seed,
            agents,
            prev_counts,
            reward_rngs,
            policy_rngs,
            attack_rngs,
            pull_rngs,
            adversaries,
            graphs: GraphSequence::new(cfg.graph.clone(), n, seed)?,
            attacking: cfg.attack != AttackSpec::Honest,
            is_byz,
            normal,
            normal_index,
            order,
            cum_regret: vec![0.0; h],
            regret: vec![Vec::with_capacity(horizon); h],
            trackers: vec![BoundTracker::new(cfg.env.gaps(), cfg.horizon); h],
            bound_curve: vec![Vec::with_capacity(horizon); h],
            stage_counts: vec![vec![[0; 3]; m]; h],
            budget_violations: 0,
            consensus_trace,
            arm_trace,
            opts,
        })
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    /// Whether agent `i` deviates from the protocol this run.
    fn deviates(&self, i: usize) -> bool {
        self.is_byz[i] && self.attacking
    }

    /// Executes decision round `t`. With `pull == false` only the filtering and
    /// decision phases run (used once at the horizon to close the bound).
    pub fn run_round(&mut self, t: u64, pull: bool) -> Result<()> {
        let graph = self.graphs.graph_at(t)?.into_owned();
        if pull && !validate_byzantine_budget(&graph, &self.cfg.byzantine, self.cfg.f) {
            self.budget_violations += 1;
        }
        if self.cfg.policy == PolicySpec::RunningConsensusTrimmed {
            self.consensus_round(t, &graph, pull)
        } else {
            self.report_round(t, &graph, pull)
        }
    }

    /// Per-adversary, per-out-neighbor, per-arm reports for this round.
    fn craft_reports(&mut self, graph: &DirectedGraph) -> Result<Vec<Option<Vec<Vec<Report>>>>> {
        let n = self.cfg.num_agents;
        let mut crafted: Vec<Option<Vec<Vec<Report>>>> = vec![None; n];
        for (j, slot) in crafted.iter_mut().enumerate() {
            if !self.deviates(j) {
                continue;
            }
            let recipients = graph.out_neighbors(j);
            let snapshot = GlobalSnapshot {
                agents: &self.agents,
                prev_counts: &self.prev_counts,
                graph,
                is_byzantine: &self.is_byz,
                env: &self.cfg.env,
            };
            let rng = &mut self.attack_rngs[j];
            let reports = match &self.cfg.attack {
                AttackSpec::ConstantBroadcast { means } => {
                    craft_reports_constant(means, j, recipients, &snapshot, rng)?
                }
                AttackSpec::GaussianBias { variance } => {
                    let state = self.adversaries[j].as_ref().expect("adversary state");
                    craft_reports_gaussian(*variance, state, recipients, &snapshot, rng)?
                }
                AttackSpec::Adaptive => recipients
                    .iter()
                    .map(|&r| craft_reports_adaptive(j, r, &snapshot))
                    .collect(),
                AttackSpec::Honest | AttackSpec::ConsensusConstant { .. } => continue,
            };
            *slot = Some(reports);
        }
        Ok(crafted)
    }

    fn report_round(&mut self, t: u64, graph: &DirectedGraph, pull: bool) -> Result<()> {
        let n = self.cfg.num_agents;
        let m = self.cfg.env.num_arms();
        let f = self.cfg.f;
        let policy = self.cfg.policy.clone();
        let filtering = policy.uses_filter();
        let crafted = if filtering {
            self.craft_reports(graph)?
        } else {
            vec![None; n]
        };

        let mut decisions = vec![0usize; n];
        let mut reports: Vec<Report> = Vec::new();
        let mut scratch: Vec<Report> = Vec::new();
        let mut estimates = vec![ArmEstimate { z: 0.0, g: 1.0 }; m];
        let mut z = vec![0.0; m];
        let mut g = vec![1.0; m];

        for idx in 0..n {
            let i = self.order[idx];
            if self.deviates(i) {
                decisions[i] = self.pull_rngs[i].random_range(0..m);
                continue;
            }
            let me = &self.agents[i];
            if filtering {
                for k in 0..m {
                    reports.clear();
                    if !self.opts.drop_reports {
                        for &j in graph.in_neighbors(i) {
                            let r = match &crafted[j] {
                                Some(per_recipient) => {
                                    let pos = graph
                                        .out_neighbors(j)
                                        .binary_search(&i)
                                        .expect("recipient is an out-neighbor");
                                    per_recipient[pos][k]
                                }
                                None => Report::new(j, k, self.agents[j].count(k), self.agents[j].mean(k)),
                            };
                            reports.push(r);
                        }
                    }
                    let s = filter_summary(me.count(k), me.mean(k), me.kappa(), &reports, f, &mut scratch);
                    check_outcome(s.a_len, s.b_len, s.g, f).map_err(|d| Error::invariant(t, i, k, d))?;
                    estimates[k] = s.into();
                    z[k] = s.z;
                    g[k] = s.g;
                }
            } else {
                g.iter_mut().for_each(|x| *x = 1.0);
            }
            decisions[i] = match policy {
                PolicySpec::SingleUcb1 => select_arm_single_ucb1(me, t)?,
                PolicySpec::ResilientUcb { tuned } => {
                    select_arm_resilient_ucb(&estimates, me.counts(), t, tuned).map_err(|e| locate(e, i))?
                }
                PolicySpec::ResilientGreedy => select_arm_greedy(&z),
                PolicySpec::SoftmaxTop3 { temperature } => {
                    select_arm_softmax_top3(&z, temperature, &mut self.policy_rngs[i])
                }
                PolicySpec::RunningConsensusTrimmed => unreachable!("handled by consensus_round"),
            };
            if let Some(h) = self.normal_index[i] {
                self.observe_bound(h, t, &g);
            }
        }

        if pull {
            self.apply_pulls(t, &decisions)?;
        }
        Ok(())
    }

    fn consensus_round(&mut self, t: u64, graph: &DirectedGraph, pull: bool) -> Result<()> {
        let n = self.cfg.num_agents;
        let m = self.cfg.env.num_arms();
        let f = self.cfg.f;
        let constant = match &self.cfg.attack {
            AttackSpec::ConsensusConstant { values } => Some(values.clone()),
            _ => None,
        };
        let log_t = round_log(t);
        let ones = vec![1.0; m];

        let mut decisions = vec![0usize; n];
        let mut retained: Vec<Option<Vec<Vec<f64>>>> = vec![None; n];
        let mut received: Vec<(usize, f64)> = Vec::new();
        for idx in 0..n {
            let i = self.order[idx];
            if self.deviates(i) {
                decisions[i] = self.pull_rngs[i].random_range(0..m);
                continue;
            }
            let mut kept = Vec::with_capacity(m);
            for k in 0..m {
                received.clear();
                if !self.opts.drop_reports {
                    for &j in graph.in_neighbors(i) {
                        let value = match (&constant, self.deviates(j)) {
                            (Some(values), true) => values[k],
                            _ => self.agents[j].consensus_estimate.as_ref().expect("consensus state")[k],
                        };
                        received.push((j, value));
                    }
                }
                kept.push(trim_consensus_reports(&received, f));
            }
            retained[i] = Some(kept);
            let me = &self.agents[i];
            let z = me.consensus_estimate.as_ref().expect("consensus state");
            decisions[i] = argmax((0..m).map(|k| z[k] + bonus_from_log(log_t, me.count(k), 1.0, false)));
            if let Some(h) = self.normal_index[i] {
                self.observe_bound(h, t, &ones);
            }
        }

        if !pull {
            return Ok(());
        }
        let before: Vec<Vec<f64>> = self.agents.iter().map(AgentState::means).collect();
        self.apply_pulls(t, &decisions)?;
        for &i in &self.order {
            let Some(kept) = retained[i].take() else { continue };
            let agent = &mut self.agents[i];
            for (k, kept_k) in kept.iter().enumerate() {
                let new_mean = agent.mean(k);
                running_consensus_update(agent, k, kept_k, new_mean, before[i][k])?;
            }
        }
        if let (Some(trace), Some((agent, arm))) = (self.consensus_trace.as_mut(), self.opts.record_consensus) {
            trace.push(self.agents[agent].consensus_estimate.as_ref().expect("consensus state")[arm]);
        }
        Ok(())
    }

    fn observe_bound(&mut self, h: usize, t: u64, g: &[f64]) {
        if t == 0 {
            return;
        }
        self.trackers[h].observe(t, g);
        self.bound_curve[h].push(self.trackers[h].current());
    }

    /// Updating phase: every agent pulls its chosen arm at time `t + 1`.
    fn apply_pulls(&mut self, t: u64, decisions: &[usize]) -> Result<()> {
        let m = self.cfg.env.num_arms();
        let time = t + 1;
        let gaps = self.cfg.env.gaps();
        for &i in &self.order {
            let arm = decisions[i];
            self.prev_counts[i].copy_from_slice(self.agents[i].counts());
            let reward = sample_reward_for(&self.cfg.env, i, arm, &mut self.reward_rngs[i][arm])?;
            self.agents[i].record_pull(arm, reward).map_err(|e| locate_round(e, t, i, arm))?;
            if self.agents[i].total_pulls() != time + m as u64 {
                return Err(Error::invariant(t, i, arm, "pull count conservation broken"));
            }
            if let Some(trace) = self.arm_trace.as_mut() {
                trace[i].push(arm);
            }
            if let Some(h) = self.normal_index[i] {
                self.cum_regret[h] += gaps[arm];
                self.regret[h].push(self.cum_regret[h]);
                self.stage_counts[h][arm][stage_of(time, self.cfg.horizon)] += 1;
            }
        }
        Ok(())
    }

    pub fn finish(self) -> RunResult {
        RunResult {
            run_index: self.run_index,
            seed: self.seed,
            normal_agents: self.normal,
            regret: self.regret,
            bound_curve: self.bound_curve,
            bounds: self.trackers.iter().map(BoundTracker::finish).collect(),
            final_counts: self.agents.iter().map(|a| a.counts().to_vec()).collect(),
            stage_counts: self.stage_counts,
            budget_violation_rounds: self.budget_violations,
            adversary_biases: self
                .adversaries
                .into_iter()
                .flatten()
                .filter(|a| !a.biases.is_empty())
                .map(|a| (a.agent, a.biases))
                .collect(),
            consensus_trace: self.consensus_trace,
            arm_trace: self.arm_trace,
        }
    }
}

fn locate(e: Error, agent: usize) -> Error {
    match e {
        Error::Invariant { round, arm, detail, .. } => Error::Invariant {
            round,
            agent,
            arm,
            detail,
        },
        other => other,
    }
}

fn locate_round(e: Error, round: u64, agent: usize, arm: usize) -> Error {
    match e {
        Error::Invariant { detail, .. } => Error::Invariant {
            round,
            agent,
            arm,
            detail,
        },
        other => other,
    }
}

/// Runs decision rounds `0..T` (pulls at times `1..=T`), then one
/// decision-only pass at `T` to close the regret bound.
pub fn simulate_run(cfg: &ExperimentConfig, run_index: usize, opts: &RunOptions) -> Result<RunResult> {
    let mut world = World::new(cfg, run_index, opts.clone())?;
    for t in 0..cfg.horizon {
        world.run_round(t, true)?;
    }
    world.run_round(cfg.horizon, false)?;
    Ok(world.finish())
}
