//! `attn-drift`: attention-drift diagnostics over dump and record corpora.

mod commands;
mod output;
mod stats_request;

use std::path::PathBuf;
use std::process::ExitCode;

use attn_drift::dump::DEFAULT_ROW_TOLERANCE;
use attn_drift::metrics::DEFAULT_ERF_THRESHOLD;
use attn_drift::stats::{DEFAULT_MAX_EXACT_N, DEFAULT_MC_DRAWS, DEFAULT_RNG_SEED};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Caps the worker pool; overridden by `--threads`.
pub const THREADS_ENV: &str = "ATTN_DRIFT_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "attn-drift",
    version,
    about = "Attention-drift diagnostics for adapted vision transformers"
)]
struct Cli {
    /// Worker threads (default: $ATTN_DRIFT_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check attention dumps for shape, range and row-stochasticity violations.
    Validate(ValidateArgs),
    /// Structural metrics (and drift against a baseline report) for attention dumps.
    Metrics(MetricsArgs),
    /// Attention rollout metrics for attention dumps.
    Rollout(RolloutArgs),
    /// Layerwise linear CKA between two feature dumps.
    Cka(CkaArgs),
    /// Inferential statistics from a JSON request file.
    Stats(StatsArgs),
    /// Join a manifest's runs into summaries, heatmaps and correlations.
    Aggregate(AggregateArgs),
    /// Emit report tables for a manifest.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Attention dump files (.atdm).
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Directory for validation.json; stdout summary only when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Row-sum tolerance.
    #[arg(long, default_value_t = DEFAULT_ROW_TOLERANCE)]
    tol: f64,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Attention dump files (.atdm).
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Metric report of the pretrained baseline; adds drift fields.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Output directory for `<run_id>.report.json`.
    #[arg(long)]
    out: PathBuf,
    /// ERF mass threshold in (0, 1].
    #[arg(long, default_value_t = DEFAULT_ERF_THRESHOLD)]
    threshold: f64,
    /// Also compute rollout metrics and store them in the report.
    #[arg(long)]
    rollout: bool,
}

#[derive(Debug, Args)]
struct RolloutArgs {
    /// Attention dump files (.atdm).
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Output directory for `<run_id>.rollout.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CkaArgs {
    /// Feature dump of the adapted run (.ftdm).
    #[arg(long)]
    a: PathBuf,
    /// Feature dump of the reference run (.ftdm).
    #[arg(long)]
    b: PathBuf,
    /// Output directory for `<run_id>.cka.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
    Latex,
    All,
}

impl FormatArg {
    fn formats(self) -> Vec<attn_drift::aggregate::Format> {
        use attn_drift::aggregate::Format;
        match self {
            FormatArg::Csv => vec![Format::Csv],
            FormatArg::Markdown => vec![Format::Markdown],
            FormatArg::Latex => vec![Format::Latex],
            FormatArg::All => Format::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
struct PermutationArgs {
    /// Seed for Monte Carlo permutation draws.
    #[arg(long, default_value_t = DEFAULT_RNG_SEED)]
    seed: u64,
    /// Largest sample size tested by full enumeration.
    #[arg(long, default_value_t = DEFAULT_MAX_EXACT_N)]
    max_exact_n: usize,
    /// Monte Carlo draws above the exact limit.
    #[arg(long, default_value_t = DEFAULT_MC_DRAWS)]
    mc_draws: usize,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// JSON request listing the tests to run.
    #[arg(long)]
    request: PathBuf,
    /// Output directory for stats.json and tables.
    #[arg(long)]
    out: PathBuf,
    /// Table format.
    #[arg(long, value_enum, default_value_t = FormatArg::All)]
    format: FormatArg,
    #[command(flatten)]
    permutation: PermutationArgs,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    /// Manifest JSON listing records, reports and baselines.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Zero-shot benchmark key; defaults to the manifest's, else cifar100.
    #[arg(long)]
    benchmark: Option<String>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Manifest JSON listing records, reports and baselines.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory (defaults to the current directory).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Table format.
    #[arg(long, value_enum, default_value_t = FormatArg::All)]
    format: FormatArg,
    /// Zero-shot benchmark key; defaults to the manifest's, else cifar100.
    #[arg(long)]
    benchmark: Option<String>,
}

fn thread_count(flag: Option<usize>) -> anyhow::Result<Option<usize>> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| anyhow::anyhow!("{THREADS_ENV}={v:?} is not a thread count"))?;
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> anyhow::Result<commands::Outcome> {
    if let Some(n) = thread_count(cli.threads)? {
        anyhow::ensure!(n >= 1, "thread count must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match cli.command {
        Command::Validate(a) => commands::validate(&a.inputs, a.out.as_deref(), a.tol),
        Command::Metrics(a) => commands::metrics(
            &a.inputs,
            a.baseline.as_deref(),
            &a.out,
            a.threshold,
            a.rollout,
        ),
        Command::Rollout(a) => commands::rollout(&a.inputs, &a.out),
        Command::Cka(a) => commands::cka(&a.a, &a.b, &a.out),
        Command::Stats(a) => commands::stats(
            &a.request,
            &a.out,
            &a.format.formats(),
            &attn_drift::stats::PermutationConfig {
                max_exact_n: a.permutation.max_exact_n,
                mc_draws: a.permutation.mc_draws,
                rng_seed: a.permutation.seed,
            },
        ),
        Command::Aggregate(a) => commands::aggregate(&a.manifest, &a.out, a.benchmark.as_deref()),
        Command::Report(a) => commands::report(
            &a.manifest,
            &a.out,
            &a.format.formats(),
            a.benchmark.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version with exit 0 and usage errors with 2
            e.exit();
        }
    };
    match run(cli) {
        Ok(commands::Outcome::Ok) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Invalid) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
