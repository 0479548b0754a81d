use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mbadmm_cli::{exit, parse_scenario, run_scenario, RunOptions};

/// Run the schemes of a scenario file and write traces and a summary.
#[derive(Debug, Parser)]
#[command(name = "mbadmm", version)]
struct Args {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; overrides the scenario's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for Jacobi-type block updates.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
    /// Runs (label or scheme name) whose non-convergence is expected.
    #[arg(long, value_delimiter = ',')]
    allow_divergence: Vec<String>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::CONFIG as u8 } else { exit::SUCCESS as u8 });
        }
    };
    let scenario = match parse_scenario(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let options = RunOptions {
        out_dir: args.out,
        workers: args.workers.map(|w| w as usize),
    };
    let summary = match run_scenario(&scenario, &options) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(star) = summary.oracle_objective {
        println!("oracle objective {star:.10e}");
    }
    for r in &summary.runs {
        let gap = r.relative_gap.map_or_else(|| "-".to_string(), |g| format!("{g:.2e}"));
        let iters = r.iterations.map_or_else(|| "-".to_string(), |k| k.to_string());
        println!("{:<24} {:<10} iterations {:<8} gap {gap}", r.label, r.status, iters);
        if let Some(m) = &r.message {
            println!("    {m}");
        }
    }
    let allowed: BTreeSet<String> = args.allow_divergence.into_iter().collect();
    ExitCode::from(summary.exit_code(&allowed) as u8)
}
