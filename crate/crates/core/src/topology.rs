//! Directed neighbor graphs.
//!
//! An arc `(j, i)` means information flows from `j` to `i`: `j` is an
//! in-neighbor of `i`, and `i` is an out-neighbor of `j`.

use std::borrow::Cow;
use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose, StreamRng};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    n: usize,
    adjacency: Vec<bool>,
    in_lists: Vec<Vec<usize>>,
    out_lists: Vec<Vec<usize>>,
}

impl DirectedGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            adjacency: vec![false; n * n],
            in_lists: vec![Vec::new(); n],
            out_lists: vec![Vec::new(); n],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut adjacency = vec![true; n * n];
        for i in 0..n {
            adjacency[i * n + i] = false;
        }
        Self::from_adjacency(n, adjacency)
    }

    /// Builds a graph from `(j, i)` arcs. Duplicates are merged.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![false; n * n];
        for &(j, i) in edges {
            if j >= n || i >= n {
                return Err(Error::Graph(format!("arc ({j}, {i}) references an agent outside 0..{n}")));
            }
            if j == i {
                return Err(Error::Graph(format!("self-loop at agent {i}")));
            }
            adjacency[j * n + i] = true;
        }
        Ok(Self::from_adjacency(n, adjacency))
    }

    /// Symmetric circulant graph: `i` and `i ± o (mod n)` are linked both
    /// ways for each offset `o`.
    pub fn circulant(n: usize, offsets: &[usize]) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..n {
            for &o in offsets {
                if o == 0 || o % n == 0 {
                    return Err(Error::Graph(format!("offset {o} would create a self-loop")));
                }
                let j = (i + o) % n;
                edges.push((i, j));
                edges.push((j, i));
            }
        }
        Self::from_edges(n, &edges)
    }

    /// `adjacency[j * n + i]` is the arc `(j, i)`. Diagonal entries are ignored.
    fn from_adjacency(n: usize, mut adjacency: Vec<bool>) -> Self {
        let mut in_lists = vec![Vec::new(); n];
        let mut out_lists = vec![Vec::new(); n];
        for j in 0..n {
            adjacency[j * n + j] = false;
            for i in 0..n {
                if adjacency[j * n + i] {
                    in_lists[i].push(j);
                    out_lists[j].push(i);
                }
            }
        }
        Self {
            n,
            adjacency,
            in_lists,
            out_lists,
        }
    }

    pub fn num_agents(&self) -> usize {
        self.n
    }

    pub fn has_arc(&self, from: usize, to: usize) -> bool {
        self.adjacency[from * self.n + to]
    }

    /// Agents that send to `i`, ascending.
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_lists[i]
    }

    /// Agents that `i` sends to, ascending.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_lists[i]
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.in_lists[i].len()
    }

    pub fn num_arcs(&self) -> usize {
        self.in_lists.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_arcs());
        for j in 0..self.n {
            for &i in &self.out_lists[j] {
                out.push((j, i));
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|j| (0..self.n).all(|i| self.has_arc(j, i) == self.has_arc(i, j)))
    }

    pub fn to_edge_list(&self) -> String {
        self.edges().iter().map(|(j, i)| format!("{j} {i}\n")).collect()
    }
}

/// Parses the edge-list text format: one `j i` pair per line for arc `(j, i)`,
/// 0-based ids, `#` starts a comment. When `n` is `None` it is inferred as the
/// largest id plus one.
pub fn parse_edge_list(text: &str, n: Option<usize>) -> Result<DirectedGraph> {
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse = |s: Option<&str>| -> Result<usize> {
            s.ok_or_else(|| Error::Graph(format!("line {}: expected `j i`", lineno + 1)))?
                .parse::<usize>()
                .map_err(|e| Error::Graph(format!("line {}: {e}", lineno + 1)))
        };
        let j = parse(parts.next())?;
        let i = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(Error::Graph(format!("line {}: trailing tokens", lineno + 1)));
        }
        edges.push((j, i));
    }
    let n = match n {
        Some(n) => n,
        None => edges.iter().map(|&(j, i)| j.max(i) + 1).max().unwrap_or(0),
    };
    DirectedGraph::from_edges(n, &edges)
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphModel {
    Fixed(DirectedGraph),
    /// Independent Erdős–Rényi draw every round.
    ErRandomPerRound { q: f64 },
    /// One Erdős–Rényi draw per run, held for every round.
    ErRandomFixed { q: f64 },
    /// Every agent keeps at least `d_min` in-neighbors; the expected in-degree
    /// is `target_mean_degree`.
    MinDegreeConstrained { d_min: usize, target_mean_degree: f64 },
}

impl GraphModel {
    pub fn fixed(graph: DirectedGraph) -> Self {
        Self::Fixed(graph)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            Self::Fixed(ref g) if g.num_agents() != n => Err(Error::config(format!(
                "graph has {} agents but the network has {n}",
                g.num_agents()
            ))),
            Self::ErRandomPerRound { q } | Self::ErRandomFixed { q } => validate_q(q),
            Self::MinDegreeConstrained {
                d_min,
                target_mean_degree,
            } => {
                if n < 2 || d_min > n - 1 {
                    return Err(Error::config(format!(
                        "d_min {d_min} exceeds the {} possible in-neighbors",
                        n.saturating_sub(1)
                    )));
                }
                if !(target_mean_degree >= d_min as f64 && target_mean_degree <= (n - 1) as f64) {
                    return Err(Error::config(format!(
                        "target mean degree {target_mean_degree} outside [{d_min}, {}]",
                        n - 1
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Whether each round needs a fresh realization.
    pub fn is_time_varying(&self) -> bool {
        matches!(self, Self::ErRandomPerRound { .. } | Self::MinDegreeConstrained { .. })
    }

    /// Draws one graph on `n` agents.
    pub fn realize<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<DirectedGraph> {
        self.validate(n)?;
        match *self {
            Self::Fixed(ref g) => Ok(g.clone()),
            Self::ErRandomPerRound { q } | Self::ErRandomFixed { q } => Ok(erdos_renyi(n, q, rng)),
            Self::MinDegreeConstrained {
                d_min,
                target_mean_degree,
            } => {
                let q0 = calibrate_min_degree_q(n - 1, d_min, target_mean_degree);
                Ok(repair_min_in_degree(erdos_renyi(n, q0, rng), d_min, rng))
            }
        }
    }

    /// Probability that every agent has at least `3f + 1` in-neighbors in one
    /// realization. Only defined for the Erdős–Rényi kinds.
    pub fn degree_requirement_probability(&self, n: usize, f: usize) -> Option<f64> {
        match *self {
            Self::ErRandomPerRound { q } | Self::ErRandomFixed { q } => {
                degree_requirement_probability(n, f, q).ok()
            }
            _ => None,
        }
    }
}

fn validate_q(q: f64) -> Result<()> {
    if q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("edge probability q = {q} outside (0, 1]")))
    }
}

/// Each ordered pair `(j, i)`, `j != i`, is an arc independently with
/// probability `q`. Pairs are visited in row-major order, one uniform each.
pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, q: f64, rng: &mut R) -> DirectedGraph {
    let mut adjacency = vec![false; n * n];
    for j in 0..n {
        for i in 0..n {
            if i != j {
                let u: f64 = rng.random();
                adjacency[j * n + i] = u < q;
            }
        }
    }
    DirectedGraph::from_adjacency(n, adjacency)
}

fn repair_min_in_degree<R: Rng + ?Sized>(graph: DirectedGraph, d_min: usize, rng: &mut R) -> DirectedGraph {
    let n = graph.n;
    let mut adjacency = graph.adjacency;
    for i in 0..n {
        let deg = (0..n).filter(|&j| adjacency[j * n + i]).count();
        if deg >= d_min {
            continue;
        }
        let mut missing: Vec<usize> = (0..n).filter(|&j| j != i && !adjacency[j * n + i]).collect();
        missing.shuffle(rng);
        for &j in missing.iter().take(d_min - deg) {
            adjacency[j * n + i] = true;
        }
    }
    DirectedGraph::from_adjacency(n, adjacency)
}

fn binomial_pmf(trials: usize, k: usize, q: f64) -> f64 {
    let mut c = 1.0f64;
    for r in 0..k {
        c = c * (trials - r) as f64 / (r + 1) as f64;
    }
    c * q.powi(k as i32) * (1.0 - q).powi((trials - k) as i32)
}

/// `E[max(Binomial(trials, q), d)]`.
fn expected_clamped_degree(trials: usize, d: usize, q: f64) -> f64 {
    (0..=trials).map(|k| k.max(d) as f64 * binomial_pmf(trials, k, q)).sum()
}

/// Edge probability for which the repaired in-degree has mean `target`.
fn calibrate_min_degree_q(trials: usize, d_min: usize, target: f64) -> f64 {
    if target <= d_min as f64 {
        return 0.0;
    }
    if target >= trials as f64 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if expected_clamped_degree(trials, d_min, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `p = [Σ_{i=3f+1}^{N-1} C(N-1, i) q^i (1-q)^{N-1-i}]^N`: the probability
/// that all `n` agents simultaneously have at least `3f + 1` in-neighbors in a
/// directed Erdős–Rényi graph (in-edge sets of distinct agents are disjoint,
/// hence independent). Returns 0 when `3f + 1 > n - 1`.
pub fn degree_requirement_probability(n: usize, f: usize, q: f64) -> Result<f64> {
    validate_q(q)?;
    let need = 3 * f + 1;
    if n == 0 || need > n - 1 {
        return Ok(0.0);
    }
    let trials = n - 1;
    let per_agent: f64 = (need..=trials).map(|k| binomial_pmf(trials, k, q)).sum();
    Ok(per_agent.powi(n as i32))
}

/// True iff every agent outside `byzantine` has at most `f` Byzantine
/// in-neighbors.
pub fn validate_byzantine_budget(graph: &DirectedGraph, byzantine: &BTreeSet<usize>, f: usize) -> bool {
    (0..graph.num_agents())
        .filter(|i| !byzantine.contains(i))
        .all(|i| graph.in_neighbors(i).iter().filter(|j| byzantine.contains(j)).count() <= f)
}

/// Per-run graph sequence: a fixed draw is cached, time-varying models use one
/// substream per round so that round `t` is reproducible on its own.
#[derive(Debug, Clone)]
pub struct GraphSequence {
    model: GraphModel,
    n: usize,
    seed: u64,
    cached: Option<DirectedGraph>,
}

impl GraphSequence {
    pub fn new(model: GraphModel, n: usize, seed: u64) -> Result<Self> {
        model.validate(n)?;
        let cached = if model.is_time_varying() {
            None
        } else {
            let mut rng = stream(seed, Purpose::Graph, &[0]);
            Some(model.realize(n, &mut rng)?)
        };
        Ok(Self {
            model,
            n,
            seed,
            cached,
        })
    }

    pub fn graph_at(&self, t: u64) -> Result<Cow<'_, DirectedGraph>> {
        match &self.cached {
            Some(g) => Ok(Cow::Borrowed(g)),
            None => {
                let mut rng: StreamRng = stream(self.seed, Purpose::Graph, &[1, t]);
                self.model.realize(self.n, &mut rng).map(Cow::Owned)
            }
        }
    }

    pub fn fixed_graph(&self) -> Option<&DirectedGraph> {
        self.cached.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn rng(seed: u64) -> StreamRng {
        stream(seed, Purpose::Graph, &[])
    }

    #[test]
    fn q_one_gives_complete_graph() {
        let g = GraphModel::ErRandomPerRound { q: 1.0 }.realize(5, &mut rng(1)).unwrap();
        assert_eq!(g, DirectedGraph::complete(5));
        assert!((0..5).all(|i| g.in_degree(i) == 4 && !g.has_arc(i, i)));
    }

    #[test]
    fn fixed_model_returns_same_graph() {
        let g = DirectedGraph::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        let seq = GraphSequence::new(GraphModel::fixed(g.clone()), 3, 11).unwrap();
        for t in [0, 1, 57, 10_000] {
            assert_eq!(*seq.graph_at(t).unwrap(), g);
        }
    }

    #[test]
    fn er_fixed_is_constant_er_per_round_varies() {
        let fixed = GraphSequence::new(GraphModel::ErRandomFixed { q: 0.5 }, 8, 3).unwrap();
        let g0 = fixed.graph_at(0).unwrap().into_owned();
        assert!((1..50).all(|t| *fixed.graph_at(t).unwrap() == g0));

        let varying = GraphSequence::new(GraphModel::ErRandomPerRound { q: 0.5 }, 8, 3).unwrap();
        let distinct = (0..50)
            .map(|t| varying.graph_at(t).unwrap().edges())
            .collect::<BTreeSet<_>>()
            .len();
        assert!(distinct > 40);
        // same (seed, t) -> same graph
        assert_eq!(varying.graph_at(17).unwrap(), varying.graph_at(17).unwrap());
    }

    #[test]
    fn er_mean_in_degree() {
        let model = GraphModel::ErRandomPerRound { q: 0.5 };
        let mut r = rng(2);
        let reps = 10_000;
        let mut total = 0usize;
        for _ in 0..reps {
            let g = model.realize(10, &mut r).unwrap();
            total += g.num_arcs();
        }
        let mean = total as f64 / (reps * 10) as f64;
        assert!((mean - 4.5).abs() < 0.1, "mean in-degree {mean}");
    }

    #[test]
    fn invalid_q_rejected() {
        for q in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(GraphModel::ErRandomPerRound { q }.realize(4, &mut rng(0)).is_err());
            assert!(degree_requirement_probability(10, 1, q).is_err());
        }
    }

    #[test]
    fn min_degree_constraint_holds() {
        let model = GraphModel::MinDegreeConstrained {
            d_min: 4,
            target_mean_degree: 4.5,
        };
        let mut r = rng(3);
        let reps = 10_000;
        let mut total = 0usize;
        for _ in 0..reps {
            let g = model.realize(10, &mut r).unwrap();
            assert!((0..10).all(|i| g.in_degree(i) >= 4));
            total += g.num_arcs();
        }
        let mean = total as f64 / (reps * 10) as f64;
        assert!((mean - 4.5).abs() < 0.5, "mean in-degree {mean}");
        assert!((mean - 4.5).abs() < 0.05, "calibration drifted: {mean}");
    }

    #[test]
    fn min_degree_validation() {
        let bad = GraphModel::MinDegreeConstrained {
            d_min: 10,
            target_mean_degree: 10.0,
        };
        assert!(bad.validate(10).is_err());
        let bad = GraphModel::MinDegreeConstrained {
            d_min: 4,
            target_mean_degree: 3.0,
        };
        assert!(bad.validate(10).is_err());
    }

    #[test]
    fn degree_probability_closed_form() {
        assert_eq!(degree_requirement_probability(10, 1, 1.0).unwrap(), 1.0);
        assert_eq!(degree_requirement_probability(4, 1, 0.9).unwrap(), 0.0);
        for q in [0.3f64, 0.5, 0.8, 0.9] {
            let direct: f64 = [(7, 36.0), (8, 9.0), (9, 1.0)]
                .iter()
                .map(|&(i, c): &(i32, f64)| c * q.powi(i) * (1.0 - q).powi(9 - i))
                .sum::<f64>()
                .powi(10);
            let p = degree_requirement_probability(10, 2, q).unwrap();
            assert!((p - direct).abs() <= 1e-12 * direct.max(1e-300), "q={q}: {p} vs {direct}");
        }
    }

    #[test]
    fn degree_probability_matches_monte_carlo() {
        let cases = [(10usize, 2usize, 0.9f64), (6, 1, 0.8), (8, 1, 0.6)];
        for (n, f, q) in cases {
            let model = GraphModel::ErRandomPerRound { q };
            let mut r = rng(100 + n as u64);
            let reps = 100_000;
            let hits = (0..reps)
                .filter(|_| {
                    let g = model.realize(n, &mut r).unwrap();
                    (0..n).all(|i| g.in_degree(i) > 3 * f)
                })
                .count();
            let est = hits as f64 / reps as f64;
            let p = model.degree_requirement_probability(n, f).unwrap();
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((est - p).abs() < 0.01, "({n},{f},{q}): MC {est} vs {p}");
            assert!((est - p).abs() <= 3.0 * se + 1e-12, "({n},{f},{q}): MC {est} vs {p}, se {se}");
        }
    }

    #[test]
    fn byzantine_budget() {
        let byz: BTreeSet<usize> = [1].into();
        assert!(validate_byzantine_budget(&DirectedGraph::complete(5), &byz, 1));
        let byz: BTreeSet<usize> = [1, 2].into();
        assert!(!validate_byzantine_budget(&DirectedGraph::complete(4), &byz, 1));
        assert!(validate_byzantine_budget(&DirectedGraph::empty(4), &byz, 0));
    }

    #[test]
    fn edge_list_round_trip() {
        let text = "# ring\n0 1\n1 2  # comment\n\n2 0\n";
        let g = parse_edge_list(text, None).unwrap();
        assert_eq!(g.num_agents(), 3);
        assert!(g.has_arc(0, 1) && g.has_arc(2, 0) && !g.has_arc(1, 0));
        assert_eq!(g.in_neighbors(0), &[2]);
        assert_eq!(g.out_neighbors(0), &[1]);
        assert_eq!(parse_edge_list(&g.to_edge_list(), Some(3)).unwrap(), g);
        assert!(parse_edge_list("0 0\n", None).is_err());
        assert!(parse_edge_list("0 x\n", None).is_err());
        assert!(parse_edge_list("0 5\n", Some(3)).is_err());
    }

    #[test]
    fn circulant_is_symmetric() {
        let g = DirectedGraph::circulant(10, &[1, 2]).unwrap();
        assert!(g.is_symmetric());
        assert!((0..10).all(|i| g.in_degree(i) == 4));
        assert_eq!(g.in_neighbors(0), &[1, 2, 8, 9]);
    }
}
