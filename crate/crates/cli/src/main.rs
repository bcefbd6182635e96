use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tapa_cli::commands::{self, Options};
use tapa_cli::config::RunConfig;
use tapa_cli::report::{Formats, ReportBundle};
use tapa_cli::CliError;

/// Verify RoPE and TAPA attention properties numerically.
#[derive(Debug, Parser)]
#[command(name = "tapa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Comma-separated check families (verify only).
    #[arg(long, global = true)]
    only: Option<String>,

    /// Comma-separated subset of csv, json, svg.
    #[arg(long, global = true, default_value = "csv,json,svg")]
    format: String,

    /// Config override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Run the full verification suite.
    Verify,
    /// Near-vs-far score difference histograms.
    BiasHist,
    /// Expected score against distance for each encoding.
    Decay,
    /// Analytic vs finite-difference TAPA gradients.
    GradCheck,
    /// Distance bias under position interpolation.
    Sweep,
}

fn run(cli: &Cli) -> Result<ReportBundle, CliError> {
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    let only = match (&cli.only, cli.command) {
        (None, _) => None,
        (Some(list), Command::Verify) => Some(commands::parse_only(list)?),
        (Some(_), _) => return Err(CliError::Usage("--only applies to verify".into())),
    };
    let opts = Options {
        out: cli.out.clone(),
        formats: Formats::parse(&cli.format)?,
        only,
    };
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Verify => commands::verify(&cfg, &opts),
        Command::BiasHist => commands::bias_hist(&cfg, &opts),
        Command::Decay => commands::decay(&cfg, &opts),
        Command::GradCheck => commands::grad_check(&cfg, &opts),
        Command::Sweep => commands::sweep(&cfg, &opts),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(bundle) => {
            let failed: Vec<_> = bundle.failures().collect();
            for f in failed.iter().take(50) {
                let params: Vec<String> =
                    f.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                eprintln!(
                    "FAIL {} lhs={} rhs={} [{}]",
                    f.name,
                    f.lhs,
                    f.rhs,
                    params.join(", ")
                );
            }
            if failed.len() > 50 {
                eprintln!("... {} more failures", failed.len() - 50);
            }
            let skipped: usize = bundle.skipped.iter().map(|s| s.count).sum();
            println!(
                "{}: {} checks, {} failed, {} skipped -> {}",
                bundle.command,
                bundle.checks.len(),
                failed.len(),
                skipped,
                if bundle.pass { "PASS" } else { "FAIL" }
            );
            if bundle.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
