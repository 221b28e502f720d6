//! Command-line driver: TOML experiments in, CSV curves, manifests and SVG
//! plots out.

pub mod config;
pub mod error;
pub mod output;
pub mod plot;
pub mod verify;

use std::path::Path;

use byzbandit_core::engine::{run_batch, AggregateResult, ExperimentConfig};
use byzbandit_core::policies::PolicySpec;
use clap::ValueEnum;

use crate::config::{parse_config, resolve, GraphKind, KappaSpec, PolicyKind, PolicySection, RawConfig};
use crate::error::{CliError, Result};
use crate::output::{emit_all, labelled_curves_csv, write_file};

/// Worker-count override; unset or `0` means one worker per core.
pub const WORKERS_ENV: &str = "BYZBANDIT_WORKERS";

pub fn workers_from_env() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::config(WORKERS_ENV, format!("`{v}` is not a worker count"))),
        Err(_) => Ok(0),
    }
}

fn emit(dir: &Path, command: &str, raw: &RawConfig, cfg: &ExperimentConfig, agg: &AggregateResult) -> Result<()> {
    emit_all(dir, command, raw, agg, cfg.env.means(), &cfg.kappa)
}

/// `run`: one batch, written to `out`.
pub fn run_command(config: &Path, out: &Path, workers: usize) -> Result<AggregateResult> {
    let (raw, cfg) = parse_config(config)?;
    let agg = run_batch(&cfg, workers)?;
    emit(out, "run", &raw, &cfg, &agg)?;
    Ok(agg)
}

#[derive(Debug)]
pub struct Comparison {
    pub resilient: AggregateResult,
    pub baseline: AggregateResult,
}

/// `compare`: the configured policy against single-agent UCB1 on the same
/// seeds, so both see identical reward streams and graphs.
pub fn compare_command(config: &Path, out: &Path, workers: usize) -> Result<Comparison> {
    let (raw, cfg) = parse_config(config)?;
    if cfg.policy == PolicySpec::SingleUcb1 {
        return Err(CliError::config("policy.kind", "compare needs a cooperative policy"));
    }
    let mut base_raw = raw.clone();
    base_raw.policy = PolicySection {
        kind: PolicyKind::SingleUcb1,
        tuned: None,
        temperature: None,
    };
    if cfg.policy == PolicySpec::RunningConsensusTrimmed {
        base_raw.attack = Default::default();
    }
    let base_cfg = resolve(&base_raw)?;

    let resilient = run_batch(&cfg, workers)?;
    let baseline = run_batch(&base_cfg, workers)?;
    let name = cfg.policy.name().to_string();
    emit(&out.join(&name), "compare", &raw, &cfg, &resilient)?;
    emit(&out.join("single-ucb1"), "compare", &base_raw, &base_cfg, &baseline)?;
    write_file(
        &out.join("compare.csv"),
        &labelled_curves_csv("policy", &[(name, &resilient), ("single-ucb1".into(), &baseline)]),
    )?;
    Ok(Comparison { resilient, baseline })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParameter {
    Kappa,
    Q,
    F,
}

/// Applies one sweep value to a copy of `raw`.
pub fn apply_sweep(raw: &RawConfig, parameter: SweepParameter, value: f64) -> Result<RawConfig> {
    let mut out = raw.clone();
    match parameter {
        SweepParameter::Kappa => out.network.kappa = KappaSpec::Uniform(value),
        SweepParameter::Q => {
            if !matches!(out.graph.kind, GraphKind::ErFixed | GraphKind::ErPerRound) {
                return Err(CliError::config("graph.kind", "a q sweep needs an er-fixed or er-per-round graph"));
            }
            out.graph.q = Some(value);
        }
        SweepParameter::F => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(CliError::config("network.f", format!("sweep value {value} is not a count")));
            }
            out.network.f = value as usize;
        }
    }
    resolve(&out)?;
    Ok(out)
}

/// `sweep`: one batch per value, all sharing the root seed.
pub fn sweep_command(
    config: &Path,
    parameter: SweepParameter,
    values: &[f64],
    out: &Path,
    workers: usize,
) -> Result<Vec<(f64, AggregateResult)>> {
    if values.is_empty() {
        return Err(CliError::config("values", "sweep needs at least one value"));
    }
    let (raw, _) = parse_config(config)?;
    let name = parameter.to_possible_value().expect("named").get_name().to_string();
    // validate every value before spending time on any of them
    let variants: Vec<RawConfig> = values
        .iter()
        .map(|&v| apply_sweep(&raw, parameter, v))
        .collect::<Result<_>>()?;
    let mut results = Vec::with_capacity(values.len());
    for (&v, variant) in values.iter().zip(&variants) {
        let cfg = resolve(variant)?;
        let agg = run_batch(&cfg, workers)?;
        emit(&out.join(format!("{name}-{v}")), "sweep", variant, &cfg, &agg)?;
        results.push((v, agg));
    }
    let series: Vec<(String, &AggregateResult)> = results.iter().map(|(v, a)| (v.to_string(), a)).collect();
    write_file(&out.join("sweep.csv"), &labelled_curves_csv(&name, &series))?;
    Ok(results)
}
