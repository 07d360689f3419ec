use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dars_core::allocator::Strategy;
use dars_core::config::BackendKind;
use dars_core::scheduler::DedupMode;

#[derive(Debug, Parser)]
#[command(name = "dars", version, about = "Difficulty-aware rejection sampling pipeline")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample each query n_d times and record its fail rate.
    Estimate(EstimateArgs),
    /// Turn difficulty records into per-query targets.
    Plan(PlanArgs),
    /// Sample until every query meets its target or hits n_max.
    Synthesize(SynthesizeArgs),
    /// Grade one response against a ground-truth answer.
    Grade(GradeArgs),
    /// Per-bucket responses-per-query and coverage of a dataset.
    Stats(StatsArgs),
    /// Expected raw samples and achieving ratio over an n_max grid.
    Curves(CurvesArgs),
    /// Merge accepted responses with original pairs into a training set.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendArg {
    Http,
    Sim,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Http => BackendKind::Http,
            BackendArg::Sim => BackendKind::Sim,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Vrt,
    Uniform,
    Prop2diff,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Vrt => Strategy::Vrt,
            StrategyArg::Uniform => Strategy::Uniform,
            StrategyArg::Prop2diff => Strategy::Prop2Diff,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DedupArg {
    None,
    Exact,
}

impl From<DedupArg> for DedupMode {
    fn from(d: DedupArg) -> Self {
        match d {
            DedupArg::None => DedupMode::None,
            DedupArg::Exact => DedupMode::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Analytic,
    MonteCarlo,
    Both,
}

#[derive(Debug, Args)]
pub struct GeneratorArgs {
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    /// Seed for the simulated backend.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSONL of {query_id, p} for the simulated backend.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Completions endpoint for the HTTP backend.
    #[arg(long)]
    pub url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long = "n-d")]
    pub n_d: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to keep correct profiling samples; defaults next to --out.
    #[arg(long)]
    pub pool_out: Option<PathBuf>,
    #[command(flatten)]
    pub generator: GeneratorArgs,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub difficulty: PathBuf,
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    /// k_u, k_p or M depending on the strategy.
    #[arg(long, conflicts_with = "desired_total")]
    pub k: Option<u64>,
    /// Pick the smallest k whose planned dataset reaches this size.
    #[arg(long)]
    pub desired_total: Option<u64>,
    /// Let Prop2Diff targets round down to zero.
    #[arg(long)]
    pub no_cover: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub targets: PathBuf,
    #[arg(long = "n-max")]
    pub n_max: Option<u64>,
    #[arg(long)]
    pub batch: Option<u32>,
    /// Profiling samples to reuse (written by `estimate`).
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub dedup: Option<DedupArg>,
    /// Continue from the checkpoint in --out.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub generator: GeneratorArgs,
}

#[derive(Debug, Args)]
pub struct GradeArgs {
    /// Response file, or `-` for stdin.
    #[arg(long)]
    pub response: String,
    #[arg(long)]
    pub truth: String,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    /// JSONL of {query_id, p}.
    #[arg(long, required_unless_present = "difficulty")]
    pub profile: Option<PathBuf>,
    /// Difficulty records; success probability is 1 - fail_rate.
    #[arg(long)]
    pub difficulty: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    #[arg(long)]
    pub k: Option<u64>,
    /// Comma list; `a,b,...,c` continues the pattern of a and b up to c.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    #[arg(long, value_enum, default_value = "analytic")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 10_000)]
    pub replicas: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Profiling samples per query, for the with-pool column.
    #[arg(long = "n-d")]
    pub n_d: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Output directory of `synthesize`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// JSONL of {id, problem, solution} pairs to merge in.
    #[arg(long)]
    pub originals: Option<PathBuf>,
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}
