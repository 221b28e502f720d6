//! Pseudo-regret and the closed-form regret bounds.

use std::f64::consts::PI;

/// `Σ_k Δ_k · pulls_k`.
pub fn pseudo_regret(pulls: &[u64], gaps: &[f64]) -> f64 {
    pulls.iter().zip(gaps).map(|(&n, &d)| n as f64 * d).sum()
}

fn constant_term(gaps: &[f64]) -> f64 {
    let c = 1.0 + PI * PI / 3.0;
    gaps.iter().filter(|&&d| d > 0.0).map(|&d| c * d).sum()
}

/// Single-agent UCB1 bound `Σ_{Δ_k>0} 8 ln T / Δ_k + (1 + π²/3) Δ_k`.
pub fn ucb1_bound(gaps: &[f64], horizon: u64) -> f64 {
    let log_t = (horizon.max(1) as f64).ln();
    gaps.iter().filter(|&&d| d > 0.0).map(|&d| 8.0 * log_t / d).sum::<f64>() + constant_term(gaps)
}

/// Both forms of the per-agent bound evaluated on a realized `g` trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResilientBound {
    /// `Σ_{Δ_k>0} max_{t≤T} 8 g_k(t) ln t / Δ_k + (1 + π²/3) Δ_k`.
    pub plain: f64,
    /// Minimum over `τ ≤ T` of the same sum up to `τ` plus `(T − τ) Δ_max`.
    pub tau_minimized: f64,
}

/// Evaluates the bound from `g_traces[k][t - 1] = g_k(t)`, `t = 1..=T`.
pub fn resilient_bound(g_traces: &[Vec<f64>], gaps: &[f64], horizon: u64) -> ResilientBound {
    let mut tracker = BoundTracker::new(gaps, horizon);
    for t in 1..=horizon {
        let g: Vec<f64> = g_traces.iter().map(|tr| tr[(t - 1) as usize]).collect();
        tracker.observe(t, &g);
    }
    tracker.finish()
}

/// Online evaluation of [`resilient_bound`], one round at a time.
#[derive(Debug, Clone)]
pub struct BoundTracker {
    inv_gaps: Vec<Option<f64>>,
    constant: f64,
    max_gap: f64,
    horizon: u64,
    running_max: Vec<f64>,
    best_tau: f64,
    current: f64,
}

impl BoundTracker {
    pub fn new(gaps: &[f64], horizon: u64) -> Self {
        Self {
            inv_gaps: gaps.iter().map(|&d| (d > 0.0).then(|| 1.0 / d)).collect(),
            constant: constant_term(gaps),
            max_gap: gaps.iter().copied().fold(0.0, f64::max),
            horizon,
            running_max: vec![0.0; gaps.len()],
            best_tau: f64::INFINITY,
            current: constant_term(gaps),
        }
    }

    /// Records `g_k(t)` for every arm. Rounds must arrive in order `1, 2, ...`.
    pub fn observe(&mut self, t: u64, g: &[f64]) {
        let log_t = (t.max(1) as f64).ln();
        let mut sum = self.constant;
        for (k, inv) in self.inv_gaps.iter().enumerate() {
            if let Some(inv) = inv {
                let v = 8.0 * g[k] * log_t;
                if v > self.running_max[k] {
                    self.running_max[k] = v;
                }
                sum += self.running_max[k] * inv;
            }
        }
        self.current = sum;
        let tail = self.horizon.saturating_sub(t) as f64 * self.max_gap;
        self.best_tau = self.best_tau.min(sum + tail);
    }

    /// The plain bound at the last observed round.
    pub fn current(&self) -> f64 {
        self.current
    }

    pub fn finish(&self) -> ResilientBound {
        ResilientBound {
            plain: self.current,
            tau_minimized: self.best_tau.min(self.current),
        }
    }
}

/// Stage `0..3` of pull time `t ∈ 1..=T`, with boundaries at `⌊T/3⌋` and
/// `⌊2T/3⌋`.
pub fn stage_of(t: u64, horizon: u64) -> usize {
    if t <= horizon / 3 {
        0
    } else if t <= 2 * horizon / 3 {
        1
    } else {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAPS: [f64; 4] = [0.0, 0.05, 0.1, 0.2];

    #[test]
    fn regret_examples() {
        assert_eq!(pseudo_regret(&[100, 0, 0, 0], &GAPS), 0.0);
        assert!((pseudo_regret(&[70, 0, 0, 30], &GAPS) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn ucb1_bound_fixture() {
        // evaluated independently: 8 ln(1e4) (20 + 10 + 5) + (1 + π²/3) 0.35
        let expected = 8.0 * 10_000f64.ln() * 35.0 + (1.0 + PI * PI / 3.0) * 0.35;
        let b = ucb1_bound(&GAPS, 10_000);
        assert!((b - expected).abs() < 1e-9);
        assert!((b - 2580.4).abs() < 0.2, "{b}");
        assert_eq!(ucb1_bound(&[0.0], 10_000), 0.0);
        assert!((ucb1_bound(&GAPS, 1) - (1.0 + PI * PI / 3.0) * 0.35).abs() < 1e-12);
    }

    #[test]
    fn resilient_bound_reductions() {
        let t = 500u64;
        let ones = vec![vec![1.0; t as usize]; 4];
        let b = resilient_bound(&ones, &GAPS, t);
        assert!((b.plain - ucb1_bound(&GAPS, t)).abs() < 1e-9);
        assert!(b.tau_minimized <= b.plain);

        let shrunk = vec![vec![0.625; t as usize]; 4];
        let b = resilient_bound(&shrunk, &GAPS, t);
        let log_part = ucb1_bound(&GAPS, t) - constant_term(&GAPS);
        assert!((b.plain - (0.625 * log_part + constant_term(&GAPS))).abs() < 1e-9);
    }

    #[test]
    fn tau_form_never_exceeds_plain() {
        let t = 300u64;
        let traces: Vec<Vec<f64>> = (0..4)
            .map(|k| (0..t).map(|s| if (s + k) % 7 == 0 { 1.0 } else { 0.6 }).collect())
            .collect();
        let b = resilient_bound(&traces, &GAPS, t);
        assert!(b.tau_minimized <= b.plain);
    }

    #[test]
    fn stage_boundaries() {
        let stages: Vec<usize> = (1..=9).map(|t| stage_of(t, 9)).collect();
        assert_eq!(stages, vec![0, 0, 0, 1, 1, 1, 2, 2, 2]);
        assert_eq!(stage_of(3333, 10_000), 0);
        assert_eq!(stage_of(3334, 10_000), 1);
        assert_eq!(stage_of(6667, 10_000), 2);
    }
}
