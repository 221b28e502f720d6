//! CSV files and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use byzbandit_core::engine::AggregateResult;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RawConfig;
use crate::error::{CliError, Result};

/// Decimal rendering with nine significant digits.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let mut decimals = 8 - magnitude;
    if decimals >= 0 {
        let s = format!("{:.*}", decimals as usize, x);
        // rounding can carry into a new leading digit (9.9999999995 -> 10.00000000)
        if significant_digits(&s) > 9 && decimals > 0 {
            decimals -= 1;
            return format!("{:.*}", decimals as usize, x);
        }
        s
    } else {
        let scale = 10f64.powi(-decimals);
        format!("{:.0}", (x / scale).round() * scale)
    }
}

fn significant_digits(s: &str) -> usize {
    s.chars()
        .filter(char::is_ascii_digit)
        .skip_while(|&c| c == '0')
        .count()
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// `round,agent_id,mean_regret,std_regret`
pub fn regret_per_agent_csv(agg: &AggregateResult) -> String {
    let mut out = String::from("round,agent_id,mean_regret,std_regret\n");
    for t in 0..agg.horizon as usize {
        for (h, &agent) in agg.normal_agents.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                t + 1,
                agent,
                fmt_num(agg.agent_mean[h][t]),
                fmt_num(agg.agent_std[h][t])
            );
        }
    }
    out
}

/// `round,mean,std,ucb1_bound,resilient_bound`
pub fn regret_network_csv(agg: &AggregateResult) -> String {
    let mut out = String::from("round,mean,std,ucb1_bound,resilient_bound\n");
    for t in 0..agg.horizon as usize {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            t + 1,
            fmt_num(agg.network_mean[t]),
            fmt_num(agg.network_std[t]),
            fmt_num(agg.ucb1_curve[t]),
            fmt_num(agg.resilient_curve[t])
        );
    }
    out
}

/// `agent_id,arm,stage,frequency` with stages numbered 1 to 3.
pub fn frequencies_csv(agg: &AggregateResult) -> String {
    let mut out = String::from("agent_id,arm,stage,frequency\n");
    for (h, &agent) in agg.normal_agents.iter().enumerate() {
        for (k, stages) in agg.stage_frequency[h].iter().enumerate() {
            for (s, f) in stages.iter().enumerate() {
                let _ = writeln!(out, "{agent},{k},{},{}", s + 1, fmt_num(*f));
            }
        }
    }
    out
}

/// Long-format curves keyed by a label column, e.g. `round,policy,mean,std`.
pub fn labelled_curves_csv(label: &str, series: &[(String, &AggregateResult)]) -> String {
    let mut out = format!("round,{label},mean,std\n");
    let horizon = series.first().map_or(0, |(_, a)| a.horizon as usize);
    for t in 0..horizon {
        for (name, agg) in series {
            let _ = writeln!(
                out,
                "{},{name},{},{}",
                t + 1,
                fmt_num(agg.network_mean[t]),
                fmt_num(agg.network_std[t])
            );
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct AgentSummary {
    agent_id: usize,
    final_mean_regret: String,
    mean_bound: String,
    mean_bound_tau_minimized: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: &'static str,
    command: &'a str,
    config_hash: String,
    root_seed: u64,
    runs: usize,
    horizon: u64,
    resolved_means: Vec<f64>,
    resolved_kappa: Vec<f64>,
    budget_violation_rounds: u64,
    agents: Vec<AgentSummary>,
    config: &'a RawConfig,
}

/// SHA-256 of the canonical JSON form of the config.
pub fn config_hash(raw: &RawConfig) -> String {
    let json = serde_json::to_string(raw).expect("config serializes");
    Sha256::digest(json.as_bytes()).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn manifest_json(command: &str, raw: &RawConfig, agg: &AggregateResult, means: &[f64], kappa: &[f64]) -> String {
    let runs = agg.runs.max(1) as f64;
    let agents = agg
        .normal_agents
        .iter()
        .enumerate()
        .map(|(h, &agent_id)| AgentSummary {
            agent_id,
            final_mean_regret: fmt_num(agg.agent_mean[h].last().copied().unwrap_or(0.0)),
            mean_bound: fmt_num(agg.bounds.iter().map(|b| b[h].plain).sum::<f64>() / runs),
            mean_bound_tau_minimized: fmt_num(agg.bounds.iter().map(|b| b[h].tau_minimized).sum::<f64>() / runs),
        })
        .collect();
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_hash: config_hash(raw),
        root_seed: raw.seed,
        runs: agg.runs,
        horizon: agg.horizon,
        resolved_means: means.to_vec(),
        resolved_kappa: kappa.to_vec(),
        budget_violation_rounds: agg.budget_violations.iter().sum(),
        agents,
        config: raw,
    };
    let mut s = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    s.push('\n');
    s
}

/// Recovers the config embedded in a manifest.
pub fn config_from_manifest(text: &str) -> Result<RawConfig> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::config("manifest", e.to_string()))?;
    let config = value
        .get("config")
        .cloned()
        .ok_or_else(|| CliError::config("manifest.config", "missing"))?;
    serde_json::from_value(config).map_err(|e| CliError::config("manifest.config", e.to_string()))
}

/// Writes the three CSVs and the manifest into `dir`.
pub fn emit_all(
    dir: &Path,
    command: &str,
    raw: &RawConfig,
    agg: &AggregateResult,
    means: &[f64],
    kappa: &[f64],
) -> Result<()> {
    write_file(&dir.join("regret_per_agent.csv"), &regret_per_agent_csv(agg))?;
    write_file(&dir.join("regret_network.csv"), &regret_network_csv(agg))?;
    write_file(&dir.join("frequencies.csv"), &frequencies_csv(agg))?;
    write_file(&dir.join("manifest.json"), &manifest_json(command, raw, agg, means, kappa))
}
