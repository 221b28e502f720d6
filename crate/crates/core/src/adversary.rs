//! Byzantine report crafting.
//!
//! Adversaries only ever produce [`Report`]s (or consensus estimates); they
//! read a [`GlobalSnapshot`] of the round-start state and never touch any
//! normal agent's statistics.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::bandit::{AgentState, ArmEnvironment};
use crate::error::{Error, Result};
use crate::resilience::Report;
use crate::topology::DirectedGraph;

#[derive(Debug, Clone, PartialEq)]
pub enum AttackSpec {
    /// Byzantine agents follow the protocol exactly (attack disabled).
    Honest,
    /// Same mean vector to everyone; counts copied from a random normal agent.
    ConstantBroadcast { means: Vec<f64> },
    /// Own mean plus `N(beta_k, variance)` noise drawn per recipient.
    GaussianBias { variance: f64 },
    /// Omniscient attack that slips inside every recipient's trimmed set.
    Adaptive,
    /// Constant consensus estimate per arm; pairs with the running-consensus
    /// policy only.
    ConsensusConstant { values: Vec<f64> },
}

impl AttackSpec {
    pub fn validate(&self, num_arms: usize) -> Result<()> {
        match self {
            Self::ConstantBroadcast { means } if means.len() != num_arms => Err(Error::config(format!(
                "constant attack has {} means for {num_arms} arms",
                means.len()
            ))),
            Self::GaussianBias { variance } if !(*variance >= 0.0 && variance.is_finite()) => {
                Err(Error::config(format!("gaussian attack variance {variance} must be >= 0")))
            }
            Self::ConsensusConstant { values } if values.len() != num_arms => Err(Error::config(format!(
                "consensus attack has {} values for {num_arms} arms",
                values.len()
            ))),
            Self::ConsensusConstant { values } if values.iter().any(|v| !(0.0..=1.0).contains(v)) => {
                Err(Error::config("consensus attack values must lie in [0, 1]"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Honest => "honest",
            Self::ConstantBroadcast { .. } => "constant",
            Self::GaussianBias { .. } => "gaussian",
            Self::Adaptive => "adaptive",
            Self::ConsensusConstant { .. } => "consensus-constant",
        }
    }
}

/// Read-only view of the network at the start of a round.
#[derive(Clone, Copy)]
pub struct GlobalSnapshot<'a> {
    pub agents: &'a [AgentState],
    /// Pull counts at the previous round boundary.
    pub prev_counts: &'a [Vec<u64>],
    pub graph: &'a DirectedGraph,
    pub is_byzantine: &'a [bool],
    pub env: &'a ArmEnvironment,
}

impl GlobalSnapshot<'_> {
    pub fn normal_agents(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.agents.len()).filter(|&i| !self.is_byzantine[i])
    }

    fn random_normal<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let normal: Vec<usize> = self.normal_agents().collect();
        if normal.is_empty() {
            return Err(Error::config("attack needs at least one normal agent"));
        }
        Ok(normal[rng.random_range(0..normal.len())])
    }
}

/// Hidden per-adversary state.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryState {
    pub agent: usize,
    /// Gaussian-attack bias per arm, in `(0, 1)`. Empty for other attacks.
    pub biases: Vec<f64>,
}

impl AdversaryState {
    pub fn new<R: Rng + ?Sized>(agent: usize, spec: &AttackSpec, num_arms: usize, rng: &mut R) -> Self {
        let biases = match spec {
            AttackSpec::GaussianBias { .. } => (0..num_arms)
                .map(|_| loop {
                    let b: f64 = rng.random();
                    if b > 0.0 {
                        break b;
                    }
                })
                .collect(),
            _ => Vec::new(),
        };
        Self { agent, biases }
    }
}

/// Same means to every recipient; the count vector is copied from one
/// uniformly drawn normal agent (drawn once per call, i.e. per round).
pub fn craft_reports_constant<R: Rng + ?Sized>(
    means: &[f64],
    adversary: usize,
    recipients: &[usize],
    snapshot: &GlobalSnapshot<'_>,
    rng: &mut R,
) -> Result<Vec<Vec<Report>>> {
    let donor = snapshot.random_normal(rng)?;
    let counts = snapshot.agents[donor].counts();
    let reports: Vec<Report> = means
        .iter()
        .enumerate()
        .map(|(k, &m)| Report::ingest(adversary, k, counts[k] as i64, m))
        .collect();
    Ok(vec![reports; recipients.len()])
}

/// Per-recipient noisy means `clamp(own_mean + c)`, `c ~ N(beta_k, variance)`,
/// with previous-round counts copied from a random normal in-neighbor of the
/// adversary (any normal agent when it has none).
pub fn craft_reports_gaussian<R: Rng + ?Sized>(
    variance: f64,
    state: &AdversaryState,
    recipients: &[usize],
    snapshot: &GlobalSnapshot<'_>,
    rng: &mut R,
) -> Result<Vec<Vec<Report>>> {
    let adversary = state.agent;
    let normal_in: Vec<usize> = snapshot
        .graph
        .in_neighbors(adversary)
        .iter()
        .copied()
        .filter(|&j| !snapshot.is_byzantine[j])
        .collect();
    let donor = if normal_in.is_empty() {
        snapshot.random_normal(rng)?
    } else {
        normal_in[rng.random_range(0..normal_in.len())]
    };
    let counts = &snapshot.prev_counts[donor];
    let own = &snapshot.agents[adversary];
    let std_dev = variance.sqrt();
    let noise: Vec<Normal<f64>> = state
        .biases
        .iter()
        .map(|&b| Normal::new(b, std_dev).map_err(|e| Error::config(format!("gaussian attack: {e}"))))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(recipients.len());
    for _ in recipients {
        let reports = noise
            .iter()
            .enumerate()
            .map(|(k, dist)| {
                let c = dist.sample(rng);
                Report::ingest(adversary, k, counts[k] as i64, own.mean(k) + c)
            })
            .collect();
        out.push(reports);
    }
    Ok(out)
}

/// Step-A survivors among `recipient`'s normal in-neighbors on `arm`, as the
/// omniscient adversary reconstructs them.
pub fn surviving_normal_means(recipient: usize, arm: usize, snapshot: &GlobalSnapshot<'_>) -> Vec<f64> {
    let me = &snapshot.agents[recipient];
    let own_count = me.count(arm) as f64;
    let kappa = me.kappa();
    snapshot
        .graph
        .in_neighbors(recipient)
        .iter()
        .filter(|&&j| !snapshot.is_byzantine[j])
        .filter(|&&j| kappa * snapshot.agents[j].count(arm) as f64 >= own_count)
        .map(|&j| snapshot.agents[j].mean(arm))
        .collect()
}

/// Reports `n_i + 1` as the count (always survives Step A) and, for the best
/// arm, the second-smallest surviving normal mean; for every other arm the
/// second-largest. Falls back to the single surviving mean, or the
/// recipient's own mean when none survive.
pub fn craft_reports_adaptive(adversary: usize, recipient: usize, snapshot: &GlobalSnapshot<'_>) -> Vec<Report> {
    let best = snapshot.env.best_arm();
    let target = &snapshot.agents[recipient];
    (0..snapshot.env.num_arms())
        .map(|k| {
            let mut means = surviving_normal_means(recipient, k, snapshot);
            means.sort_by(f64::total_cmp);
            let value = match means.len() {
                0 => target.mean(k),
                1 => means[0],
                _ if k == best => means[1],
                len => means[len - 2],
            };
            Report::ingest(adversary, k, target.count(k) as i64 + 1, value)
        })
        .collect()
}

/// Every recipient receives the constant per-arm estimate.
pub fn craft_reports_consensus_constant(values: &[f64], recipients: &[usize]) -> Vec<Vec<f64>> {
    vec![values.to_vec(); recipients.len()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::initialize_agent_with;
    use crate::rng::{stream, Purpose};

    struct Fixture {
        agents: Vec<AgentState>,
        prev: Vec<Vec<u64>>,
        graph: DirectedGraph,
        byz: Vec<bool>,
        env: ArmEnvironment,
    }

    impl Fixture {
        fn snapshot(&self) -> GlobalSnapshot<'_> {
            GlobalSnapshot {
                agents: &self.agents,
                prev_counts: &self.prev,
                graph: &self.graph,
                is_byzantine: &self.byz,
                env: &self.env,
            }
        }
    }

    /// Agent 0 Byzantine; agent i has means `rows[i]` and counts `counts[i]`.
    fn fixture(rows: &[Vec<f64>], counts: &[Vec<u64>], env_means: &[f64]) -> Fixture {
        let n = rows.len();
        let agents: Vec<AgentState> = rows
            .iter()
            .zip(counts)
            .enumerate()
            .map(|(i, (m, c))| {
                let mut s = initialize_agent_with(i, m.len(), 1.0, |k| Ok(m[k])).unwrap();
                for (k, &cnt) in c.iter().enumerate() {
                    for _ in 1..cnt {
                        s.record_pull(k, m[k]).unwrap();
                    }
                }
                s
            })
            .collect();
        let prev = agents.iter().map(|a| a.counts().to_vec()).collect();
        let mut byz = vec![false; n];
        byz[0] = true;
        Fixture {
            agents,
            prev,
            graph: DirectedGraph::complete(n),
            byz,
            env: ArmEnvironment::bernoulli(env_means).unwrap(),
        }
    }

    #[test]
    fn constant_broadcast_same_to_all() {
        let fx = fixture(
            &[vec![0.5; 4], vec![0.1; 4], vec![0.2; 4], vec![0.3; 4], vec![0.4; 4]],
            &[vec![1; 4], vec![3, 1, 1, 1], vec![1, 5, 1, 1], vec![2; 4], vec![7; 4]],
            &[0.5, 0.45, 0.4, 0.3],
        );
        let snap = fx.snapshot();
        let mut rng = stream(1, Purpose::Attack, &[]);
        let means = [0.4, 0.5, 0.4, 0.3];
        for _ in 0..200 {
            let out = craft_reports_constant(&means, 0, &[1, 2, 3, 4], &snap, &mut rng).unwrap();
            let counts: Vec<u64> = out[0].iter().map(|r| r.count).collect();
            assert!((1..5).any(|i| fx.agents[i].counts() == counts.as_slice()));
            for per in &out {
                assert_eq!(per.iter().map(|r| r.mean).collect::<Vec<_>>(), means);
                assert_eq!(per.iter().map(|r| r.count).collect::<Vec<_>>(), counts);
            }
        }
    }

    #[test]
    fn constant_broadcast_single_normal_donor() {
        let fx = fixture(&[vec![0.5; 2], vec![0.2; 2]], &[vec![1; 2], vec![4, 9]], &[0.5, 0.1]);
        let mut rng = stream(2, Purpose::Attack, &[]);
        for _ in 0..20 {
            let out = craft_reports_constant(&[0.0, 1.0], 0, &[1], &fx.snapshot(), &mut rng).unwrap();
            assert_eq!(out[0][0].count, 4);
            assert_eq!(out[0][1].count, 9);
        }
    }

    #[test]
    fn constant_broadcast_without_normal_agents_fails() {
        let mut fx = fixture(&[vec![0.5], vec![0.2]], &[vec![1], vec![1]], &[0.5]);
        fx.byz = vec![true, true];
        let mut rng = stream(3, Purpose::Attack, &[]);
        assert!(craft_reports_constant(&[0.1], 0, &[1], &fx.snapshot(), &mut rng).is_err());
    }

    #[test]
    fn gaussian_degenerate_noise_is_exact() {
        let fx = fixture(&[vec![0.3, 0.9], vec![0.2, 0.2], vec![0.1, 0.1]], &[vec![1; 2], vec![2; 2], vec![3; 2]], &[0.5, 0.4]);
        let state = AdversaryState {
            agent: 0,
            biases: vec![0.25, 0.5],
        };
        let mut rng = stream(4, Purpose::Attack, &[]);
        let out = craft_reports_gaussian(0.0, &state, &[1, 2], &fx.snapshot(), &mut rng).unwrap();
        for per in &out {
            assert!((per[0].mean - 0.55).abs() < 1e-12);
            assert_eq!(per[1].mean, 1.0);
            assert!(per[0].count == 2 || per[0].count == 3);
        }
    }

    #[test]
    fn gaussian_concentrates_near_clamp() {
        let fx = fixture(&[vec![0.9], vec![0.2], vec![0.1]], &[vec![1], vec![2], vec![3]], &[0.5]);
        let state = AdversaryState {
            agent: 0,
            biases: vec![0.5],
        };
        let mut rng = stream(5, Purpose::Attack, &[]);
        let mut total = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let out = craft_reports_gaussian(0.01, &state, &[1], &fx.snapshot(), &mut rng).unwrap();
            let m = out[0][0].mean;
            assert!((0.0..=1.0).contains(&m));
            total += m;
        }
        // 0.9 + N(0.5, 0.01) is above 1 with probability ~0.9999997
        assert!(total / n as f64 > 0.999);
    }

    #[test]
    fn gaussian_reports_conflict_across_recipients() {
        let fx = fixture(&[vec![0.4], vec![0.2], vec![0.1]], &[vec![1], vec![2], vec![3]], &[0.5]);
        let mut rng = stream(6, Purpose::Attack, &[]);
        let state = AdversaryState::new(0, &AttackSpec::GaussianBias { variance: 0.01 }, 1, &mut rng);
        assert!(state.biases.iter().all(|&b| b > 0.0 && b < 1.0));
        // keep the sum away from the clamp
        let state = AdversaryState {
            agent: 0,
            biases: vec![0.1],
        };
        for _ in 0..1000 {
            let out = craft_reports_gaussian(0.01, &state, &[1, 2], &fx.snapshot(), &mut rng).unwrap();
            assert_ne!(out[0][0].mean, out[1][0].mean);
        }
    }

    #[test]
    fn adaptive_picks_second_order_statistics() {
        // agent 4 is the recipient; normal neighbors 1, 2, 3
        let fx = fixture(
            &[
                vec![0.0, 0.0],
                vec![0.48, 0.30],
                vec![0.50, 0.40],
                vec![0.52, 0.45],
                vec![0.5, 0.35],
            ],
            &[vec![1; 2], vec![4; 2], vec![4; 2], vec![4; 2], vec![4; 2]],
            &[0.5, 0.4],
        );
        let out = craft_reports_adaptive(0, 4, &fx.snapshot());
        assert_eq!(out[0].mean, 0.50);
        assert_eq!(out[1].mean, 0.40);
        assert!(out.iter().all(|r| r.count == 5));
    }

    #[test]
    fn adaptive_fallbacks() {
        // single surviving normal neighbor
        let mut fx = fixture(&[vec![0.0], vec![0.5], vec![0.9]], &[vec![1], vec![3], vec![3]], &[0.5]);
        fx.graph = DirectedGraph::from_edges(3, &[(0, 2), (1, 2)]).unwrap();
        assert_eq!(craft_reports_adaptive(0, 2, &fx.snapshot())[0].mean, 0.5);
        // no survivors: own mean
        fx.graph = DirectedGraph::from_edges(3, &[(0, 2)]).unwrap();
        assert_eq!(craft_reports_adaptive(0, 2, &fx.snapshot())[0].mean, 0.9);
    }

    #[test]
    fn adaptive_respects_consistency_filter() {
        // neighbor 1 has too few pulls to survive recipient 3's Step A
        let fx = fixture(
            &[vec![0.0], vec![0.1], vec![0.6], vec![0.7]],
            &[vec![1], vec![1], vec![10], vec![10]],
            &[0.5],
        );
        let snap = fx.snapshot();
        let kept = surviving_normal_means(3, 0, &snap);
        assert_eq!(kept.len(), 1);
        assert!((kept[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn consensus_constant() {
        let out = craft_reports_consensus_constant(&[1.0 / 3.0], &[1, 2, 3]);
        assert!(out.iter().all(|v| v == &vec![1.0 / 3.0]));
    }

    #[test]
    fn attack_validation() {
        assert!(AttackSpec::ConstantBroadcast { means: vec![0.1] }.validate(2).is_err());
        assert!(AttackSpec::GaussianBias { variance: -1.0 }.validate(2).is_err());
        assert!(AttackSpec::ConsensusConstant { values: vec![1.5] }.validate(1).is_err());
        assert!(AttackSpec::Adaptive.validate(3).is_ok());
    }
}
