use std::path::PathBuf;

use capx_core::pipeline::BackgroundMode;
use capx_engine::bench::ReportFormat;
use capx_engine::ExecutorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "capx", version, about = "Capillary density analysis of microcirculation frames")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze every image in a directory and write annotated frames plus results.json.
    Analyze(AnalyzeArgs),
    /// Run the executor benchmark on a synthetic corpus.
    Bench(BenchArgs),
    /// Write a deterministic CXW1 weight file.
    GenWeights(GenWeightsArgs),
    /// Write a deterministic synthetic PNG corpus with a manifest.
    GenCorpus(GenCorpusArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExecutorArg {
    Serial,
    #[value(alias = "master_slave")]
    MasterSlave,
    #[value(alias = "worker_per_core")]
    WorkerPerCore,
}

impl From<ExecutorArg> for ExecutorKind {
    fn from(e: ExecutorArg) -> Self {
        match e {
            ExecutorArg::Serial => ExecutorKind::Serial,
            ExecutorArg::MasterSlave => ExecutorKind::MasterSlave,
            ExecutorArg::WorkerPerCore => ExecutorKind::WorkerPerCore,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackgroundArg {
    Still,
    Sequence,
}

impl From<BackgroundArg> for BackgroundMode {
    fn from(b: BackgroundArg) -> Self {
        match b {
            BackgroundArg::Still => BackgroundMode::Still,
            BackgroundArg::Sequence => BackgroundMode::Sequence,
        }
    }
}

/// Pipeline settings shared by analyze and bench. Flags override the
/// config file, which overrides defaults.
#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// JSON file mirroring the pipeline configuration.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// CXW1 weight file; without one the built-in intensity model is used.
    #[arg(long, value_name = "PATH")]
    pub weights: Option<PathBuf>,
    #[arg(long, value_name = "TAU")]
    pub ssim_threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub background: Option<BackgroundArg>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, value_name = "DIR")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "worker-per-core")]
    pub executor: ExecutorArg,
    /// Total slots given to the executor (defaults to the host's logical processors).
    #[arg(long, env = "CAPX_WORKERS", value_name = "N")]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 100, value_name = "N")]
    pub frames: usize,
    /// Core counts to measure, e.g. 1,2,4 (defaults to powers of two up to the host's slots).
    #[arg(long, value_delimiter = ',', value_name = "A,B,C")]
    pub cores: Vec<usize>,
    #[arg(long = "executors", alias = "executor", value_enum, value_delimiter = ',', value_name = "LIST")]
    pub executors: Vec<ExecutorArg>,
    #[arg(long, value_name = "PATH", default_value = "bench_report.json")]
    pub report: PathBuf,
    /// Defaults to the report's extension, else json.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1920)]
    pub width: usize,
    #[arg(long, default_value_t = 1080)]
    pub height: usize,
    /// Corpus directory; reused when its manifest matches.
    #[arg(long, value_name = "DIR")]
    pub corpus: Option<PathBuf>,
    /// Slot count to check core counts against, instead of the host's.
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
    #[arg(long)]
    pub no_warmup: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct GenWeightsArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// `random` (He-initialised) or `intensity` (built-in brightness detector).
    #[arg(long, value_enum, default_value = "random")]
    pub model: ModelArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Random,
    Intensity,
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_name = "N")]
    pub count: usize,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1920)]
    pub width: usize,
    #[arg(long, default_value_t = 1080)]
    pub height: usize,
}
