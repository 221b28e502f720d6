//! TOML experiment files.
//!
//! ```toml
//! name = "five-agent"
//! seed = 2023
//! horizon = 10000
//! runs = 50
//!
//! [network]
//! agents = 5
//! byzantine = [0]
//! f = 1
//! kappa = [1.0, 1.0, 1.2, 1.5, 1.8]   # or 1.5, or "random"
//!
//! [graph]
//! kind = "er-fixed"                   # complete | empty | er-fixed | er-per-round
//! q = 0.8                             # | min-degree | circulant | edge-list
//!
//! [arms]
//! kind = "bernoulli"                  # bernoulli | point-mass | beta
//! means = [0.5, 0.45, 0.4, 0.3]       # or `random = 20`
//!
//! [policy]
//! kind = "resilient-ucb"              # single-ucb1 | resilient-greedy
//! tuned = false                       # | softmax-top3 | running-consensus
//!
//! [attack]
//! kind = "constant"                   # honest | gaussian | adaptive
//! means = [0.4, 0.5, 0.4, 0.3]        # | consensus-constant
//! ```
//!
//! Every semantic error names the offending key, e.g. `graph.q`.

use std::collections::BTreeSet;
use std::path::Path;

use byzbandit_core::adversary::AttackSpec;
use byzbandit_core::bandit::{validate_kappa, ArmEnvironment, RewardDistribution};
use byzbandit_core::engine::ExperimentConfig;
use byzbandit_core::policies::PolicySpec;
use byzbandit_core::rng::{stream, Purpose};
use byzbandit_core::topology::{parse_edge_list, DirectedGraph, GraphModel};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub seed: u64,
    pub horizon: u64,
    pub runs: usize,
    pub network: NetworkSection,
    pub graph: GraphSection,
    pub arms: ArmsSection,
    pub policy: PolicySection,
    #[serde(default)]
    pub attack: AttackSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub agents: usize,
    #[serde(default)]
    pub byzantine: Vec<usize>,
    pub f: usize,
    pub kappa: KappaSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KappaSpec {
    Uniform(f64),
    PerAgent(Vec<f64>),
    Keyword(KappaKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaKeyword {
    /// Each agent draws `kappa` uniformly from `[1, 2)`.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    Complete,
    Empty,
    ErFixed,
    ErPerRound,
    MinDegree,
    Circulant,
    EdgeList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub kind: GraphKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_min: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_degree: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<usize>>,
    /// Edge-list file, relative to the config file. Replaced by `edges` on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// Arcs as `[from, to]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArmKind {
    Bernoulli,
    PointMass,
    Beta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmsSection {
    pub kind: ArmKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<f64>>,
    /// Number of arms with means drawn uniformly from `[0, 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<usize>,
    /// `alpha + beta` for beta arms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentration: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    ResilientUcb,
    SingleUcb1,
    ResilientGreedy,
    SoftmaxTop3,
    RunningConsensus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuned: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    #[default]
    Honest,
    Constant,
    Gaussian,
    Adaptive,
    ConsensusConstant,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    #[serde(default)]
    pub kind: AttackKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<ScalarOrList>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

/// Parses TOML text. Edge-list paths are resolved against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: Option<&Path>) -> Result<RawConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::config("", e.to_string()))?;
    let mut raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::config(if path == "." { String::new() } else { path }, e.into_inner().to_string())
    })?;
    if let Some(rel) = raw.graph.path.take() {
        if raw.graph.edges.is_some() {
            return Err(CliError::config("graph.path", "give either `path` or `edges`, not both"));
        }
        let file = base_dir.map_or_else(|| Path::new(&rel).to_path_buf(), |d| d.join(&rel));
        let text = std::fs::read_to_string(&file).map_err(|e| CliError::io(&file, e))?;
        let graph = parse_edge_list(&text, Some(raw.network.agents))
            .map_err(|e| CliError::config("graph.path", e.to_string()))?;
        raw.graph.edges = Some(graph.edges().into_iter().map(|(j, i)| [j, i]).collect());
    }
    resolve(&raw)?;
    Ok(raw)
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<(RawConfig, ExperimentConfig)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let raw = parse_config_str(&text, path.parent())?;
    let cfg = resolve(&raw)?;
    Ok((raw, cfg))
}

fn require<T: Clone>(value: &Option<T>, path: &str, kind: &str) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| CliError::config(path, format!("required for kind \"{kind}\"")))
}

fn unit_interval(x: f64, path: &str) -> Result<f64> {
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(CliError::config(path, format!("{x} outside [0, 1]")))
    }
}

/// Builds the validated experiment. Random means and kappas are drawn from
/// dedicated substreams of `seed`, so the result is a pure function of `raw`.
pub fn resolve(raw: &RawConfig) -> Result<ExperimentConfig> {
    let n = raw.network.agents;
    if n == 0 {
        return Err(CliError::config("network.agents", "must be >= 1"));
    }
    if raw.horizon == 0 {
        return Err(CliError::config("horizon", "must be >= 1"));
    }
    if raw.runs == 0 {
        return Err(CliError::config("runs", "must be >= 1"));
    }
    let mut byzantine = BTreeSet::new();
    for (idx, &b) in raw.network.byzantine.iter().enumerate() {
        let path = format!("network.byzantine[{idx}]");
        if b >= n {
            return Err(CliError::config(path, format!("agent {b} outside 0..{n}")));
        }
        if !byzantine.insert(b) {
            return Err(CliError::config(path, format!("agent {b} listed twice")));
        }
    }
    if byzantine.len() == n {
        return Err(CliError::config("network.byzantine", "at least one agent must be normal"));
    }

    let kappa = match &raw.network.kappa {
        KappaSpec::Uniform(k) => vec![*k; n],
        KappaSpec::PerAgent(ks) => {
            if ks.len() != n {
                return Err(CliError::config(
                    "network.kappa",
                    format!("{} values for {n} agents", ks.len()),
                ));
            }
            ks.clone()
        }
        KappaSpec::Keyword(KappaKeyword::Random) => {
            let mut rng = stream(raw.seed, Purpose::Kappa, &[]);
            (0..n).map(|_| 1.0 + rng.random::<f64>()).collect()
        }
    };
    for (i, &k) in kappa.iter().enumerate() {
        validate_kappa(k).map_err(|e| CliError::config(format!("network.kappa[{i}]"), e.to_string()))?;
    }

    let env = resolve_arms(&raw.arms, raw.seed)?;
    let graph = resolve_graph(&raw.graph, n)?;
    let policy = resolve_policy(&raw.policy)?;
    let attack = resolve_attack(&raw.attack, env.num_arms())?;

    let cfg = ExperimentConfig {
        env,
        graph,
        num_agents: n,
        byzantine,
        kappa,
        f: raw.network.f,
        policy,
        attack,
        horizon: raw.horizon,
        runs: raw.runs,
        root_seed: raw.seed,
    };
    cfg.validate().map_err(|e| CliError::config("policy.kind", e.to_string()))?;
    Ok(cfg)
}

fn resolve_arms(arms: &ArmsSection, seed: u64) -> Result<ArmEnvironment> {
    let means = match (&arms.means, arms.random) {
        (Some(_), Some(_)) => return Err(CliError::config("arms", "give either `means` or `random`, not both")),
        (Some(means), None) => means.clone(),
        (None, Some(m)) => {
            let mut rng = stream(seed, Purpose::Environment, &[]);
            (0..m).map(|_| rng.random::<f64>()).collect()
        }
        (None, None) => return Err(CliError::config("arms.means", "missing (or give `random`)")),
    };
    if means.is_empty() {
        return Err(CliError::config("arms.means", "need at least one arm"));
    }
    for (k, &m) in means.iter().enumerate() {
        unit_interval(m, &format!("arms.means[{k}]"))?;
    }
    let dists = match arms.kind {
        ArmKind::Bernoulli => means.iter().map(|&p| RewardDistribution::Bernoulli(p)).collect(),
        ArmKind::PointMass => means.iter().map(|&v| RewardDistribution::PointMass(v)).collect(),
        ArmKind::Beta => {
            let c = require(&arms.concentration, "arms.concentration", "beta")?;
            if !(c > 0.0 && c.is_finite()) {
                return Err(CliError::config("arms.concentration", "must be positive"));
            }
            let mut out = Vec::with_capacity(means.len());
            for (k, &m) in means.iter().enumerate() {
                if m <= 0.0 || m >= 1.0 {
                    return Err(CliError::config(format!("arms.means[{k}]"), "beta means must lie in (0, 1)"));
                }
                out.push(RewardDistribution::Beta {
                    alpha: m * c,
                    beta: (1.0 - m) * c,
                });
            }
            out
        }
    };
    ArmEnvironment::new(dists).map_err(|e| CliError::config("arms", e.to_string()))
}

fn resolve_graph(g: &GraphSection, n: usize) -> Result<GraphModel> {
    let q = |kind: &str| -> Result<f64> {
        let q = require(&g.q, "graph.q", kind)?;
        if q > 0.0 && q <= 1.0 {
            Ok(q)
        } else {
            Err(CliError::config("graph.q", format!("{q} outside (0, 1]")))
        }
    };
    let model = match g.kind {
        GraphKind::Complete => GraphModel::fixed(DirectedGraph::complete(n)),
        GraphKind::Empty => GraphModel::fixed(DirectedGraph::empty(n)),
        GraphKind::ErFixed => GraphModel::ErRandomFixed { q: q("er-fixed")? },
        GraphKind::ErPerRound => GraphModel::ErRandomPerRound { q: q("er-per-round")? },
        GraphKind::MinDegree => GraphModel::MinDegreeConstrained {
            d_min: require(&g.d_min, "graph.d_min", "min-degree")?,
            target_mean_degree: require(&g.mean_degree, "graph.mean_degree", "min-degree")?,
        },
        GraphKind::Circulant => {
            let offsets = require(&g.offsets, "graph.offsets", "circulant")?;
            GraphModel::fixed(
                DirectedGraph::circulant(n, &offsets).map_err(|e| CliError::config("graph.offsets", e.to_string()))?,
            )
        }
        GraphKind::EdgeList => {
            let edges = require(&g.edges, "graph.edges", "edge-list")?;
            let arcs: Vec<(usize, usize)> = edges.iter().map(|[j, i]| (*j, *i)).collect();
            GraphModel::fixed(
                DirectedGraph::from_edges(n, &arcs).map_err(|e| CliError::config("graph.edges", e.to_string()))?,
            )
        }
    };
    model.validate(n).map_err(|e| CliError::config("graph", e.to_string()))?;
    Ok(model)
}

fn resolve_policy(p: &PolicySection) -> Result<PolicySpec> {
    Ok(match p.kind {
        PolicyKind::ResilientUcb => PolicySpec::ResilientUcb {
            tuned: p.tuned.unwrap_or(false),
        },
        PolicyKind::SingleUcb1 => PolicySpec::SingleUcb1,
        PolicyKind::ResilientGreedy => PolicySpec::ResilientGreedy,
        PolicyKind::SoftmaxTop3 => {
            let temperature = require(&p.temperature, "policy.temperature", "softmax-top3")?;
            let spec = PolicySpec::SoftmaxTop3 { temperature };
            spec.validate().map_err(|e| CliError::config("policy.temperature", e.to_string()))?;
            spec
        }
        PolicyKind::RunningConsensus => PolicySpec::RunningConsensusTrimmed,
    })
}

fn resolve_attack(a: &AttackSection, num_arms: usize) -> Result<AttackSpec> {
    let spec = match a.kind {
        AttackKind::Honest => AttackSpec::Honest,
        AttackKind::Constant => {
            let means = require(&a.means, "attack.means", "constant")?;
            for (k, &m) in means.iter().enumerate() {
                unit_interval(m, &format!("attack.means[{k}]"))?;
            }
            AttackSpec::ConstantBroadcast { means }
        }
        AttackKind::Gaussian => AttackSpec::GaussianBias {
            variance: require(&a.variance, "attack.variance", "gaussian")?,
        },
        AttackKind::Adaptive => AttackSpec::Adaptive,
        AttackKind::ConsensusConstant => {
            let values = match require(&a.values, "attack.values", "consensus-constant")? {
                ScalarOrList::Scalar(v) => vec![v; num_arms],
                ScalarOrList::List(vs) => vs,
            };
            AttackSpec::ConsensusConstant { values }
        }
    };
    spec.validate(num_arms).map_err(|e| CliError::config("attack", e.to_string()))?;
    Ok(spec)
}
