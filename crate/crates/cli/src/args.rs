use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crowd_core::analysis::QuestionSelection;
use crowd_core::dataset::Stage;
use crowd_core::resample::{SamplingMode, DEFAULT_COMBINATION_CAP, DEFAULT_ITERATIONS};
use crowd_core::rules::DEFAULT_SAMPLE_SIZE;
use crowd_core::stats::DEFAULT_PERMUTATIONS;

/// Collective-estimation analyses on three-stage crowd experiments.
#[derive(Debug, Parser)]
#[command(name = "crowd", version)]
pub struct Cli {
    /// Worker threads. Results do not depend on this value.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Write a reproducibility record (arguments, resolved settings, digests).
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, validate and re-serialize a dataset.
    Ingest(IngestArgs),
    /// Generate a synthetic three-stage crowd.
    Simulate(SimulateArgs),
    /// Crowd error as a function of crowd size.
    Curves(CurvesArgs),
    /// Compare the recorded consensus with simple aggregation rules.
    RulesBench(RulesBenchArgs),
    /// Bias, convergence and polarization statistics of deliberation.
    Stats(StatsArgs),
    /// Error reduction from initial to revised estimates.
    Reduce(ReduceArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Dataset CSV (participant_id, group_id, role, question_code, stage, estimate, confidence).
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,

    /// Question table; the bundled table is used when omitted.
    #[arg(long, value_name = "PATH")]
    pub questions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Artifact path, `.csv` or `.json`. JSON goes to stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    /// Monte Carlo iterations.
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iterations: usize,

    /// Seed of every random stream. Required whenever iterations > 0.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of five-member groups.
    #[arg(long, default_value_t = 280)]
    pub groups: usize,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Parameter file in the format of the bundled `defaults.toml`.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Question table with `median_i1` and `mad_i1` calibration columns.
    #[arg(long, value_name = "PATH")]
    pub questions: Option<PathBuf>,

    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub noise_c: Option<f64>,
    #[arg(long)]
    pub noise_r: Option<f64>,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Within,
    Between,
}

impl From<ModeArg> for SamplingMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Within => SamplingMode::WithinGroups,
            ModeArg::Between => SamplingMode::BetweenGroups,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    I1,
    C,
    I2,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::I1 => Stage::I1,
            StageArg::C => Stage::C,
            StageArg::I2 => Stage::I2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectionArg {
    Discussed,
    Undiscussed,
    All,
}

impl From<SelectionArg> for QuestionSelection {
    fn from(s: SelectionArg) -> Self {
        match s {
            SelectionArg::Discussed => QuestionSelection::Discussed,
            SelectionArg::Undiscussed => QuestionSelection::Undiscussed,
            SelectionArg::All => QuestionSelection::All,
        }
    }
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub seed: SeedArgs,

    #[arg(long, value_enum, default_value = "within")]
    pub mode: ModeArg,

    #[arg(long, value_enum, default_value = "i1")]
    pub stage: StageArg,

    /// Crowd sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ns: Vec<usize>,

    /// Combinations evaluated per iteration.
    #[arg(long, default_value_t = DEFAULT_COMBINATION_CAP)]
    pub cap: usize,

    #[arg(long, value_enum, default_value = "discussed")]
    pub select: SelectionArg,
}

#[derive(Debug, Args)]
pub struct RulesBenchArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub seed: SeedArgs,

    /// Groups drawn, with replacement, per iteration.
    #[arg(long, default_value_t = DEFAULT_SAMPLE_SIZE)]
    pub sample: usize,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,

    /// Permutations of the squared-rank homogeneity test.
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    pub permutations: usize,

    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub seed: SeedArgs,

    #[arg(long, value_enum, default_value = "within")]
    pub mode: ModeArg,

    #[arg(long, value_delimiter = ',', required = true)]
    pub ns: Vec<usize>,

    #[arg(long, default_value_t = DEFAULT_COMBINATION_CAP)]
    pub cap: usize,
}
