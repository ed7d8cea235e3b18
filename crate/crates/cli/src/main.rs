use std::fs::File;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mfg_nash::config::ExperimentConfig;
use mfg_nash::pipeline::{self, ExitStatus};
use mfg_nash::{models, Error, Result};

/// Mean-field game solver and epsilon-Nash certifier.
///
/// Exit codes: 0 success, 1 runtime or data error, 2 solver did not
/// converge, 3 certification failed, 4 invalid configuration.
#[derive(Parser)]
#[command(name = "mfgnash", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seeds.master`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the mean-field game and write policy, flow and fixed-point report.
    Solve(RunArgs),
    /// Certify solver artifacts over the n-ladder.
    Certify {
        #[command(flatten)]
        run: RunArgs,
        /// Directory holding the solver artifacts (default: the output directory).
        #[arg(long)]
        artifacts: Option<PathBuf>,
    },
    /// Fit a log-log rate to a CSV of `n,value` rows ('-' reads stdin).
    RateFit { input: PathBuf },
    /// Check a configuration and the model's declared bounds.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the built-in models and their parameters.
    ListModels,
}

fn load(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seeds.master = s;
    }
    Ok(cfg)
}


fn run(cli: Cli) -> Result<ExitStatus> {
    match cli.command {
        Command::Solve(args) => {
            let cfg = load(&args)?;
            let out = pipeline::output_dir(&cfg, args.out.as_deref());
            let o = pipeline::with_threads(args.threads, || pipeline::run_solve(&cfg, &out))??;
            let r = &o.report;
            eprintln!(
                "{} after {} iterations (last gap {:.3e}, tol {:.1e}); residual {:.3e}; artifacts in {}",
                if r.converged { "converged" } else { "NOT converged" },
                r.iterations,
                r.gaps.last().copied().unwrap_or(f64::NAN),
                r.tolerance,
                r.residual,
                out.display()
            );
            Ok(o.status)
        }
        Command::Certify { run: args, artifacts } => {
            let cfg = load(&args)?;
            let out = pipeline::output_dir(&cfg, args.out.as_deref());
            let artifacts = artifacts.unwrap_or_else(|| out.clone());
            let o = pipeline::with_threads(args.threads, || pipeline::run_certify(&cfg, &artifacts, &out))??;
            for c in &o.report.checks {
                eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            for e in &o.report.errors {
                eprintln!("error: {e}");
            }
            eprintln!("report in {}", out.join(pipeline::REPORT_FILE).display());
            Ok(o.status)
        }
        Command::RateFit { input } => {
            let fit = if input == Path::new("-") {
                pipeline::fit_rate_csv(io::stdin().lock())?
            } else {
                pipeline::fit_rate_csv(BufReader::new(File::open(&input)?))?
            };
            println!("{}", serde_json::to_string_pretty(&fit)?);
            Ok(ExitStatus::Pass)
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = pipeline::run_validate(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if report.passed() {
                Ok(ExitStatus::Pass)
            } else {
                let names: Vec<&str> = report.violations().map(|v| v.name.as_str()).collect();
                Err(Error::Config(format!("declared bounds violated: {}", names.join(", "))))
            }
        }
        Command::ListModels => {
            for m in models::catalogue() {
                let params: Vec<String> = m.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!("{:<14} {}\n{:<14} params: {}", m.name, m.summary, "", params.join(" "));
            }
            Ok(ExitStatus::Pass)
        }
    }
}

fn main() -> ExitCode {
    let status = match run(Cli::parse()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("mfgnash: {e}");
            ExitStatus::of_error(&e)
        }
    };
    ExitCode::from(status.code() as u8)
}
