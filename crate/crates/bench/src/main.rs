use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use relaynet::baselines::SchemeId;
use relaynet::experiment::{
    run_mobility_matrix, run_stationary_matrix, summarize_file, write_records, ExperimentConfig, ExperimentError,
    MatrixOutput,
};

/// Relay topology benchmarks for energy-harvesting IoT networks.
///
/// Log verbosity follows RUST_LOG (e.g. RUST_LOG=info).
#[derive(Parser)]
#[command(name = "relaynet-bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the stationary scheme comparison matrix.
    Stationary(RunArgs),
    /// Run the mobility matrix (one row per frame).
    Mobility(RunArgs),
    /// Summarize a results CSV per (scheme, n_d, n_b).
    Summarize {
        input: PathBuf,
        #[arg(long, default_value = "summary.csv")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Sequential execution with byte-identical output.
    #[arg(long)]
    deterministic: bool,
    /// Comma-separated schemes: direct,mst,greedy,exhaustive,gmga.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<SchemeId>>,
    /// Largest n_d for exhaustive search.
    #[arg(long)]
    max_exhaustive: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig, ExperimentError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if self.deterministic {
            cfg.deterministic = true;
        }
        if let Some(schemes) = &self.schemes {
            cfg.schemes = schemes.clone();
        }
        if let Some(n) = self.max_exhaustive {
            cfg.max_exhaustive = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

fn run_matrix(args: &RunArgs, default_out: &str, run: fn(&ExperimentConfig) -> MatrixOutput) -> anyhow::Result<ExitCode> {
    let cfg = match args.resolve() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(EXIT_CONFIG));
        }
    };
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(default_out));
    let result = run(&cfg);
    write_records(&out, &cfg, &result.records).with_context(|| format!("writing {}", out.display()))?;
    log::info!("wrote {} rows to {}", result.records.len(), out.display());
    if result.failures > 0 {
        eprintln!("{} of {} runs failed; see the error column", result.failures, result.records.len());
        return Ok(ExitCode::from(EXIT_PARTIAL));
    }
    Ok(ExitCode::SUCCESS)
}

fn summarize(input: &Path, out: &Path) -> anyhow::Result<ExitCode> {
    let summary = summarize_file(input, out).with_context(|| format!("summarizing {}", input.display()))?;
    if summary.malformed > 0 {
        eprintln!("skipped {} malformed rows", summary.malformed);
    }
    if summary.rows.is_empty() {
        eprintln!("warning: no successful runs in {}", input.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Stationary(args) => run_matrix(args, "stationary.csv", run_stationary_matrix),
        Command::Mobility(args) => run_matrix(args, "mobility.csv", run_mobility_matrix),
        Command::Summarize { input, out } => summarize(input, out),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(EXIT_CONFIG)
    })
}
