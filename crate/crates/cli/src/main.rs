use std::path::PathBuf;
use std::process::ExitCode;

use byzbandit::error::{CliError, Result};
use byzbandit::verify::{run_suite, Suite};
use byzbandit::{compare_command, plot, run_command, sweep_command, workers_from_env, SweepParameter};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "byzbandit", version, about = "Byzantine-resilient decentralized bandit experiments")]
struct Cli {
    /// Worker threads (overrides BYZBANDIT_WORKERS; 0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch and write CSVs plus a manifest.
    Run {
        config: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Run one batch per parameter value with shared seeds.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        parameter: SweepParameter,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the configured policy and single-agent UCB1 on common random numbers.
    Compare {
        config: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Check filter invariants, the consensus counterexample and the bounds.
    Verify {
        #[arg(value_enum, default_value = "all")]
        suite: Suite,
    },
    /// Render a regret CSV as SVG.
    Plot { csv: PathBuf, out: PathBuf },
}

fn execute(cli: Cli) -> Result<()> {
    let workers = match cli.workers {
        Some(w) => w,
        None => workers_from_env()?,
    };
    match cli.command {
        Command::Run { config, out } => {
            let agg = run_command(&config, &out, workers)?;
            println!(
                "network mean regret at T={}: {:.3} (wrote {})",
                agg.horizon,
                agg.final_network_mean(),
                out.display()
            );
        }
        Command::Sweep {
            config,
            parameter,
            values,
            out,
        } => {
            for (v, agg) in sweep_command(&config, parameter, &values, &out, workers)? {
                println!("{v}: network mean regret {:.3}", agg.final_network_mean());
            }
        }
        Command::Compare { config, out } => {
            let cmp = compare_command(&config, &out, workers)?;
            println!("resilient:   {:.3}", cmp.resilient.final_network_mean());
            println!("single-ucb1: {:.3}", cmp.baseline.final_network_mean());
        }
        Command::Verify { suite } => {
            let report = run_suite(suite, workers)?;
            for check in &report.checks {
                println!("{check}");
            }
            if !report.passed() {
                let failed = report.checks.iter().filter(|c| !c.passed).count();
                return Err(CliError::Verify(format!("{failed} check(s) failed")));
            }
        }
        Command::Plot { csv, out } => plot::emit_plot(&csv, &out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
