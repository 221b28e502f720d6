//! Per-(agent, arm, round) filtering of neighbor reports.
//!
//! Step A drops neighbors whose reported pull count is too small relative to
//! the agent's own (`kappa * n_j < n_i`). Step B drops the `f` largest and `f`
//! smallest reported means among the survivors, or everything when at most
//! `2f` survive. The agent then averages its own mean with what is left and
//! shrinks its confidence bonus according to how many reports were fused.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::bandit::AgentState;
use crate::error::{Error, Result};

/// One `(count, mean)` pair for one arm, as received from `sender`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Report {
    pub sender: usize,
    pub arm: usize,
    pub count: u64,
    pub mean: f64,
}

impl Report {
    /// Ingests a possibly adversarial report: the mean is clamped to
    /// `[0, 1]` (NaN becomes 0) and negative counts to 0.
    pub fn ingest(sender: usize, arm: usize, count: i64, mean: f64) -> Self {
        Self {
            sender,
            arm,
            count: count.max(0) as u64,
            mean: clamp_unit(mean),
        }
    }

    pub fn new(sender: usize, arm: usize, count: u64, mean: f64) -> Self {
        Self {
            sender,
            arm,
            count,
            mean: clamp_unit(mean),
        }
    }
}

pub fn clamp_unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// Result of filtering one agent's reports on one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    /// Step-A survivors, ascending sender id.
    pub a_set: Vec<usize>,
    /// Step-B survivors, ascending sender id.
    pub b_set: Vec<usize>,
    pub z: f64,
    pub g: f64,
}

/// What the decision rule needs from a filter pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSummary {
    pub a_len: usize,
    pub b_len: usize,
    pub z: f64,
    pub g: f64,
}

fn passes_consistency(self_count: u64, kappa: f64, count: u64) -> bool {
    kappa * count as f64 >= self_count as f64
}

/// Step A: keeps `{ j : kappa * count_j >= self_count }`. Means are not
/// looked at. Returned ids keep the order of `reports`.
pub fn consistency_filter(self_count: u64, kappa: f64, reports: &[Report]) -> Vec<usize> {
    reports
        .iter()
        .filter(|r| passes_consistency(self_count, kappa, r.count))
        .map(|r| r.sender)
        .collect()
}

/// Ascending by reported mean, ties by ascending sender id.
fn report_order(a: &Report, b: &Report) -> Ordering {
    a.mean.total_cmp(&b.mean).then(a.sender.cmp(&b.sender))
}

/// Sorts `survivors` and returns the middle `len - 2f` entries (empty when
/// `len <= 2f`).
fn trim_in_place(survivors: &mut [Report], f: usize) -> &[Report] {
    if survivors.len() <= 2 * f {
        return &[];
    }
    survivors.sort_unstable_by(report_order);
    let len = survivors.len();
    &survivors[f..len - f]
}

/// Step B: drops the `f` largest and `f` smallest reported means among
/// `a_set`; empty when `|a_set| <= 2f`. Ties break by ascending sender id.
/// Returned ids are ascending.
pub fn trimmed_mean_filter(a_set: &[usize], reports: &[Report], f: usize) -> Vec<usize> {
    let mut survivors: Vec<Report> = a_set
        .iter()
        .map(|id| {
            *reports
                .iter()
                .find(|r| r.sender == *id)
                .expect("every member of a_set has a report")
        })
        .collect();
    let mut kept: Vec<usize> = trim_in_place(&mut survivors, f).iter().map(|r| r.sender).collect();
    kept.sort_unstable();
    kept
}

/// `(self_mean + Σ retained means) / (|retained| + 1)`; `self_mean` when
/// nothing is retained.
pub fn fuse_estimate<I>(self_mean: f64, retained_means: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let (sum, n) = retained_means
        .into_iter()
        .fold((self_mean, 1usize), |(s, n), m| (s + m, n + 1));
    sum / n as f64
}

/// `1` when nothing was fused, otherwise
/// `kappa/4 + kappa/(4(b+1)) + 1/(b+1)^2`, which is below 1 for `b >= 1` and
/// `kappa < 2`.
pub fn adjusted_variance(kappa: f64, b_size: usize) -> f64 {
    if b_size == 0 {
        return 1.0;
    }
    let b1 = (b_size + 1) as f64;
    kappa / 4.0 + kappa / (4.0 * b1) + 1.0 / (b1 * b1)
}

/// Exploration bonus. Untuned: `sqrt(2 g ln t / n)`; tuned:
/// `sqrt(g ln t / (4 n))`. `ln` is taken of `max(t, 1)`, so rounds 0 and 1
/// carry no bonus.
pub fn confidence_bonus(t: u64, n: u64, g: f64, tuned: bool) -> Result<f64> {
    if n == 0 {
        return Err(Error::Invariant {
            round: t,
            agent: usize::MAX,
            arm: usize::MAX,
            detail: "confidence bonus requested for an arm with zero pulls".into(),
        });
    }
    Ok(bonus_from_log(round_log(t), n, g, tuned))
}

/// `ln(max(t, 1))`.
pub fn round_log(t: u64) -> f64 {
    (t.max(1) as f64).ln()
}

/// The bonus as a function of an already computed `ln t`.
pub fn bonus_from_log(log_t: f64, n: u64, g: f64, tuned: bool) -> f64 {
    let n = n as f64;
    if tuned {
        (g * log_t / (4.0 * n)).sqrt()
    } else {
        (2.0 * g * log_t / n).sqrt()
    }
}

/// Runs Step A, Step B, the fused estimate and the adjusted variance for one
/// arm. `reports` must come from the agent's current in-neighbors only.
pub fn filter_pipeline(agent: &AgentState, arm: usize, reports: &[Report], f: usize) -> FilterOutcome {
    let self_count = agent.count(arm);
    let kappa = agent.kappa();
    let a_set = consistency_filter(self_count, kappa, reports);
    let mut b_set = trimmed_mean_filter(&a_set, reports, f);
    b_set.sort_unstable();
    let mut a_sorted = a_set;
    a_sorted.sort_unstable();
    let b_means = b_set
        .iter()
        .map(|id| reports.iter().find(|r| r.sender == *id).map(|r| r.mean).unwrap_or(0.0));
    let z = fuse_estimate(agent.mean(arm), b_means);
    let g = adjusted_variance(kappa, b_set.len());
    FilterOutcome {
        a_set: a_sorted,
        b_set,
        z,
        g,
    }
}

/// Allocation-free form of [`filter_pipeline`] for the simulation loop.
/// `scratch` is overwritten.
pub fn filter_summary(
    self_count: u64,
    self_mean: f64,
    kappa: f64,
    reports: &[Report],
    f: usize,
    scratch: &mut Vec<Report>,
) -> FilterSummary {
    scratch.clear();
    scratch.extend(reports.iter().filter(|r| passes_consistency(self_count, kappa, r.count)));
    let a_len = scratch.len();
    let kept = trim_in_place(scratch, f);
    let z = fuse_estimate(self_mean, kept.iter().map(|r| r.mean));
    FilterSummary {
        a_len,
        b_len: kept.len(),
        z,
        g: adjusted_variance(kappa, kept.len()),
    }
}

/// Checks the structural invariants of a filter pass.
pub fn check_outcome(a_len: usize, b_len: usize, g: f64, f: usize) -> std::result::Result<(), String> {
    let expected_b = a_len.saturating_sub(2 * f);
    if b_len != expected_b {
        return Err(format!("|B| = {b_len} but |A| - 2f = {expected_b}"));
    }
    if !(g > 0.0 && g <= 1.0) {
        return Err(format!("g = {g} outside (0, 1]"));
    }
    if (g < 1.0) != (b_len > 0) {
        return Err(format!("g = {g} inconsistent with |B| = {b_len}"));
    }
    Ok(())
}

/// Brute-force reference for [`trimmed_mean_filter`], used by tests and the
/// `verify` command.
pub mod oracle {
    use std::collections::BTreeSet;

    /// `a` precedes `b` in the (value, id) order.
    fn precedes(a: (usize, f64), b: (usize, f64)) -> bool {
        a.1 < b.1 || (a.1 == b.1 && a.0 < b.0)
    }

    /// Enumerates every subset of size `max(len - 2f, 0)` and returns the one
    /// with exactly `f` excluded values below all its members and `f` above.
    /// Exponential; intended for at most ~20 values.
    pub fn trimmed_mean_oracle(values: &[(usize, f64)], f: usize) -> BTreeSet<usize> {
        let n = values.len();
        assert!(n <= 24, "oracle is exponential in the number of values");
        if n <= 2 * f {
            return BTreeSet::new();
        }
        let keep = n - 2 * f;
        for mask in 0u32..(1u32 << n) {
            if mask.count_ones() as usize != keep {
                continue;
            }
            let inside = |idx: usize| mask & (1 << idx) != 0;
            let members: Vec<(usize, f64)> = (0..n).filter(|&i| inside(i)).map(|i| values[i]).collect();
            let mut below = 0;
            let mut above = 0;
            for (idx, &v) in values.iter().enumerate() {
                if inside(idx) {
                    continue;
                }
                if members.iter().all(|&m| precedes(v, m)) {
                    below += 1;
                } else if members.iter().all(|&m| precedes(m, v)) {
                    above += 1;
                }
            }
            if below == f && above == f {
                return members.iter().map(|m| m.0).collect();
            }
        }
        unreachable!("a middle block always exists")
    }
}

/// Set form of the Step-B output, convenient for comparisons.
pub fn as_set(ids: &[usize]) -> BTreeSet<usize> {
    ids.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::oracle::trimmed_mean_oracle;
    use super::*;
    use crate::bandit::initialize_agent_with;
    use proptest::prelude::*;

    fn rep(sender: usize, count: u64, mean: f64) -> Report {
        Report::new(sender, 0, count, mean)
    }

    #[test]
    fn consistency_examples() {
        let reports = [rep(0, 7, 0.5), rep(1, 6, 0.5), rep(2, 20, 0.5)];
        assert_eq!(consistency_filter(10, 1.5, &reports), vec![0, 2]);

        let equal = [rep(3, 10, 0.1), rep(4, 10, 0.9)];
        assert_eq!(consistency_filter(10, 1.0, &equal), vec![3, 4]);

        let fresh = [rep(0, 1, 0.0), rep(1, 5, 1.0), rep(2, 100, 0.3)];
        assert_eq!(consistency_filter(1, 1.0, &fresh), vec![0, 1, 2]);
    }

    #[test]
    fn trimmed_examples() {
        let reports = [rep(0, 1, 0.1), rep(1, 1, 0.2), rep(2, 1, 0.3), rep(3, 1, 0.4), rep(4, 1, 0.9)];
        let all: Vec<usize> = (0..5).collect();
        assert_eq!(trimmed_mean_filter(&all, &reports, 1), vec![1, 2, 3]);
        assert!(trimmed_mean_filter(&[0, 1], &reports, 1).is_empty());
        assert_eq!(trimmed_mean_filter(&all, &reports, 0), all);
    }

    #[test]
    fn fuse_examples() {
        assert_eq!(fuse_estimate(0.42, []), 0.42);
        assert!((fuse_estimate(0.5, [0.4, 0.6]) - 0.5).abs() < 1e-15);
        assert_eq!(fuse_estimate(0.3, [0.3, 0.3, 0.3]), 0.3);
    }

    #[test]
    fn adjusted_variance_examples() {
        assert_eq!(adjusted_variance(1.7, 0), 1.0);
        assert!((adjusted_variance(1.0, 1) - 0.625).abs() < 1e-15);
        for b in 1..=50 {
            assert!(adjusted_variance(1.999, b) < 1.0);
        }
    }

    #[test]
    fn bonus_examples() {
        for n in [1, 5, 100] {
            assert_eq!(confidence_bonus(1, n, 0.7, false).unwrap(), 0.0);
            assert_eq!(confidence_bonus(0, n, 0.7, true).unwrap(), 0.0);
        }
        assert!((bonus_from_log(1.0, 8, 1.0, false) - 0.5).abs() < 1e-15);
        assert!((bonus_from_log(1.0, 1, 1.0, true) - 0.5).abs() < 1e-15);
        let t = 7u64;
        let lt = (t as f64).ln();
        assert!((confidence_bonus(t, 8, 1.0, false).unwrap() - (2.0 * lt / 8.0).sqrt()).abs() < 1e-15);
        assert!((confidence_bonus(t, 1, 1.0, true).unwrap() - (lt / 4.0).sqrt()).abs() < 1e-15);
        assert!(confidence_bonus(5, 0, 1.0, false).is_err());
    }

    #[test]
    fn no_neighbors_degenerates_to_local_mean() {
        let agent = initialize_agent_with(0, 1, 1.3, |_| Ok(0.25)).unwrap();
        let out = filter_pipeline(&agent, 0, &[], 1);
        assert!(out.a_set.is_empty() && out.b_set.is_empty());
        assert_eq!(out.z, 0.25);
        assert_eq!(out.g, 1.0);
    }

    #[test]
    fn extreme_byzantine_value_excluded() {
        let agent = initialize_agent_with(9, 1, 1.0, |_| Ok(0.5)).unwrap();
        let reports = [rep(0, 3, 0.99), rep(1, 3, 0.49), rep(2, 3, 0.51), rep(3, 3, 0.5), rep(4, 3, 0.52)];
        let out = filter_pipeline(&agent, 0, &reports, 1);
        assert_eq!(out.a_set.len(), 5);
        assert!(!out.b_set.contains(&0));
        assert_eq!(out.b_set.len(), 3);
        assert!(out.g < 1.0);
    }

    #[test]
    fn too_few_survivors_empty_b() {
        let agent = initialize_agent_with(9, 1, 1.0, |_| Ok(0.5)).unwrap();
        let reports: Vec<Report> = (0..4).map(|j| rep(j, 1, 0.1 * j as f64)).collect();
        let out = filter_pipeline(&agent, 0, &reports, 2);
        assert_eq!(out.a_set.len(), 4);
        assert!(out.b_set.is_empty());
        assert_eq!(out.g, 1.0);
        assert_eq!(out.z, 0.5);
    }

    #[test]
    fn ingestion_clamps() {
        let r = Report::ingest(1, 0, -5, 1.7);
        assert_eq!((r.count, r.mean), (0, 1.0));
        assert_eq!(Report::ingest(1, 0, 3, f64::NAN).mean, 0.0);
        assert_eq!(Report::ingest(1, 0, 3, -0.2).mean, 0.0);
    }

    #[test]
    fn oracle_identity_and_ties() {
        let vals = [(0, 0.3), (1, 0.1), (2, 0.9)];
        assert_eq!(trimmed_mean_oracle(&vals, 0), [0, 1, 2].into());
        // all equal: ids 0..f and the f largest ids are trimmed
        let equal: Vec<(usize, f64)> = (0..7).map(|i| (i, 0.5)).collect();
        assert_eq!(trimmed_mean_oracle(&equal, 2), [2, 3, 4].into());
        let reports: Vec<Report> = equal.iter().map(|&(i, m)| rep(i, 1, m)).collect();
        let ids: Vec<usize> = (0..7).collect();
        assert_eq!(trimmed_mean_filter(&ids, &reports, 2), vec![2, 3, 4]);
    }

    fn reports_strategy() -> impl Strategy<Value = Vec<Report>> {
        // coarse grid of means forces frequent ties
        proptest::collection::vec((0u64..30, 0u8..=10), 0..12).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(j, (c, m))| rep(j, c, m as f64 / 10.0))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn pipeline_matches_oracle(
            reports in reports_strategy(),
            self_count in 1u64..30,
            kappa in 1.0f64..2.0,
            f in 0usize..4,
            self_mean in 0.0f64..=1.0,
        ) {
            let agent = initialize_agent_with(99, 1, kappa, |_| Ok(self_mean)).unwrap();
            // bump the count without moving the mean
            let mut agent = agent;
            for _ in 1..self_count { agent.record_pull(0, self_mean).unwrap(); }

            let out = filter_pipeline(&agent, 0, &reports, f);
            let values: Vec<(usize, f64)> = reports
                .iter()
                .filter(|r| out.a_set.contains(&r.sender))
                .map(|r| (r.sender, r.mean))
                .collect();
            prop_assert_eq!(as_set(&out.b_set), trimmed_mean_oracle(&values, f));
            prop_assert!(check_outcome(out.a_set.len(), out.b_set.len(), out.g, f).is_ok());
            prop_assert!(as_set(&out.b_set).is_subset(&as_set(&out.a_set)));
            prop_assert!((0.0..=1.0).contains(&out.z));

            let mut scratch = Vec::new();
            let s = filter_summary(agent.count(0), agent.mean(0), kappa, &reports, f, &mut scratch);
            prop_assert_eq!(s.a_len, out.a_set.len());
            prop_assert_eq!(s.b_len, out.b_set.len());
            prop_assert!((s.z - out.z).abs() < 1e-12);
            prop_assert_eq!(s.g, out.g);
        }

        #[test]
        fn trimming_is_monotone_in_f(reports in reports_strategy()) {
            let ids: Vec<usize> = reports.iter().map(|r| r.sender).collect();
            let sizes: Vec<usize> = (0..6).map(|f| trimmed_mean_filter(&ids, &reports, f).len()).collect();
            prop_assert!(sizes.windows(2).all(|w| w[1] <= w[0]));
        }

        #[test]
        fn fused_estimate_is_permutation_invariant(
            reports in reports_strategy(),
            seed in any::<u64>(),
            f in 0usize..3,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let agent = initialize_agent_with(99, 1, 1.0, |_| Ok(0.37)).unwrap();
            let a = filter_pipeline(&agent, 0, &reports, f);
            let mut shuffled = reports.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let b = filter_pipeline(&agent, 0, &shuffled, f);
            prop_assert_eq!(&a.b_set, &b.b_set);
            prop_assert!((a.z - b.z).abs() < 1e-12);
        }

        #[test]
        fn retained_means_bracketed_by_normal_reports(
            normal in proptest::collection::vec(0.0f64..=1.0, 1..9),
            byzantine in proptest::collection::vec(-1.0f64..2.0, 0..4),
            f in 0usize..4,
        ) {
            prop_assume!(byzantine.len() <= f);
            let mut reports = Vec::new();
            for (j, &m) in normal.iter().enumerate() {
                reports.push(rep(j, 5, m));
            }
            let offset = normal.len();
            for (j, &m) in byzantine.iter().enumerate() {
                reports.push(Report::ingest(offset + j, 0, 5, m));
            }
            let ids: Vec<usize> = reports.iter().map(|r| r.sender).collect();
            let kept = trimmed_mean_filter(&ids, &reports, f);
            prop_assume!(!kept.is_empty());
            let lo = normal.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = normal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for id in kept {
                let m = reports[id].mean;
                prop_assert!(m >= lo && m <= hi, "retained {} outside [{}, {}]", m, lo, hi);
            }
        }

        #[test]
        fn adjusted_variance_in_unit_interval(kappa in 1.0f64..2.0, b in 0usize..200) {
            let g = adjusted_variance(kappa, b);
            prop_assert!(g > 0.0 && g <= 1.0);
            prop_assert_eq!(g < 1.0, b > 0);
        }
    }
}
