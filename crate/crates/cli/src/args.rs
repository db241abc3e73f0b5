use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use tea_core::eval::{BaseSimilarity, Direction, MetricSpace};
use tea_core::model::Mode;

pub const DATA_ROOT_ENV: &str = "TEA_DATA_ROOT";

/// Error in how the tool was invoked rather than in the run itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "tea", version, args_override_self = true, about = "Time-aware entity alignment between temporal knowledge graphs")]
pub struct Cli {
    /// Worker threads for similarity and ranking; 1 gives reproducible timing.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one or more models and report test metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Build or inspect datasets.
    #[command(subcommand)]
    Forge(ForgeCommand),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    TimeAware,
    TimeUnaware,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::TimeAware => Mode::TimeAware,
            ModeArg::TimeUnaware => Mode::TimeUnaware,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    L1,
    Csls,
    Both,
}

impl MetricArg {
    pub fn spaces(self) -> Vec<MetricSpace> {
        match self {
            MetricArg::L1 => vec![MetricSpace::L1],
            MetricArg::Csls => vec![MetricSpace::Csls],
            MetricArg::Both => vec![MetricSpace::L1, MetricSpace::Csls],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    SourceToTarget,
    TargetToSource,
    Both,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::SourceToTarget => Direction::SourceToTarget,
            DirectionArg::TargetToSource => Direction::TargetToSource,
            DirectionArg::Both => Direction::Both,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BaseArg {
    L1,
    Cosine,
}

impl From<BaseArg> for BaseSimilarity {
    fn from(b: BaseArg) -> Self {
        match b {
            BaseArg::L1 => BaseSimilarity::L1,
            BaseArg::Cosine => BaseSimilarity::Cosine,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Dataset directory; relative paths that do not exist are looked up
    /// under $TEA_DATA_ROOT.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Seed of the first run; run i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// TOML file with training hyperparameters; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "f32")]
    pub precision: Precision,
    #[arg(long, value_enum)]
    pub self_loops: Option<OnOff>,
    /// Runs executed concurrently.
    #[arg(long, default_value_t = 1)]
    pub parallel_runs: usize,
    /// Write gnuplot data files for loss and metric curves.
    #[arg(long)]
    pub emit_plots: bool,
    /// Write 0 for every wall-clock field so artifacts are reproducible.
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long, value_enum, default_value = "source-to-target")]
    pub direction: DirectionArg,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub neg_per_pos: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub k_csls: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub metric: MetricArg,
    #[arg(long, default_value_t = tea_core::eval::DEFAULT_K_CSLS)]
    pub k_csls: usize,
    #[arg(long, value_enum, default_value = "l1")]
    pub base: BaseArg,
    /// Also report the highly and lowly time-sensitive test subsets.
    #[arg(long)]
    pub partition: bool,
    #[arg(long, default_value_t = tea_core::eval::DEFAULT_SENSITIVITY_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value = "source-to-target")]
    pub direction: DirectionArg,
    /// Directory for report.json, report.csv and manifest.json; the JSON
    /// report always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Subcommand, Debug, Clone)]
pub enum ForgeCommand {
    /// Generate a synthetic aligned graph pair.
    Synth(SynthArgs),
    /// Split one graph into an aligned pair with a given overlap.
    Split(SplitArgs),
    /// Print dataset statistics.
    Stats(StatsArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub entities: Option<usize>,
    #[arg(long)]
    pub relations: Option<usize>,
    #[arg(long)]
    pub time_steps: Option<usize>,
    #[arg(long)]
    pub quads_per_entity: Option<usize>,
    #[arg(long)]
    pub planted: Option<usize>,
    #[arg(long = "seeds")]
    pub seed_count: Option<usize>,
    #[arg(long = "ratio")]
    pub overlap_ratio: Option<f64>,
    #[arg(long)]
    pub non_temporal_ratio: Option<f64>,
    #[arg(long)]
    pub twin_neighbors: Option<usize>,
    #[arg(long)]
    pub twin_window: Option<usize>,
    #[arg(long, value_enum)]
    pub anchor_twins: Option<OnOff>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with generator settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SplitArgs {
    /// Labelled quadruple file, or a dataset directory whose first graph is split.
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub ratio: f64,
    #[arg(long = "seeds", default_value_t = 20)]
    pub seed_count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Row label; defaults to the directory name.
    #[arg(long)]
    pub name: Option<String>,
    /// With `--layers`, also print the trainable parameter count.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
}

/// Resolves a dataset path, falling back to $TEA_DATA_ROOT for relative
/// paths missing from the working directory.
pub fn resolve_data(path: &Path) -> PathBuf {
    if path.is_absolute() || path.exists() {
        return path.to_path_buf();
    }
    match std::env::var_os(DATA_ROOT_ENV) {
        Some(root) => Path::new(&root).join(path),
        None => path.to_path_buf(),
    }
}
