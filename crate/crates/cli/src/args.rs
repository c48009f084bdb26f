use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "fdbench", version, about = "Feature-distance metrics for generative models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Import a CSV feature matrix into an FDBF1 file.
    Convert(ConvertArgs),
    /// Compute metrics between real and generated feature sets.
    Metric(MetricArgs),
    /// Per-vector sparsity and entropy of one feature set.
    Diagnose(DiagnoseArgs),
    /// Kendall τ between each metric and the downstream score, per ladder.
    Align(AlignArgs),
    /// Pairwise metric agreement across one or more ladders.
    Consistency(ConsistencyArgs),
    /// Generate a synthetic quality ladder with known ground truth.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// generated | real_test | real_train
    #[arg(long)]
    pub role: String,
    #[arg(long, default_value = "unknown")]
    pub extractor: String,
    /// legacy-resize | clean-resize | none
    #[arg(long, default_value = "none")]
    pub preprocessing: String,
    /// Defaults to the input file name.
    #[arg(long)]
    pub source: Option<String>,
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    /// Real features (role real_test for FLD).
    #[arg(long)]
    pub real: PathBuf,
    /// Generated features.
    #[arg(long)]
    pub gen: PathBuf,
    /// Real training features, required by --fld.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub fid: bool,
    #[arg(long)]
    pub kid: bool,
    #[arg(long)]
    pub cmmd: bool,
    #[arg(long)]
    pub fld: bool,
    /// JSON config; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report FD² instead of FD as the FID value.
    #[arg(long)]
    pub squared: bool,
    /// auto | off | <epsilon>
    #[arg(long)]
    pub jitter: Option<String>,
    /// Seed for KID blocks and FLD fitting.
    #[arg(long)]
    pub seed: Option<u64>,
    /// kid-poly3 | kid-rq
    #[arg(long)]
    pub kid_kernel: Option<String>,
    #[arg(long)]
    pub kid_block_size: Option<usize>,
    #[arg(long)]
    pub kid_blocks: Option<usize>,
    /// median | <sigma>
    #[arg(long)]
    pub cmmd_sigma: Option<String>,
    /// biased | unbiased
    #[arg(long)]
    pub cmmd_estimator: Option<String>,
    /// em_kl | anchored_nll
    #[arg(long)]
    pub fld_mode: Option<String>,
    #[arg(long)]
    pub fld_k: Option<usize>,
    /// Write JSON here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = fdbench_core::diagnostics::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Per-vector table.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub ladder: PathBuf,
    /// downstream_score, or a metric column to use as the score.
    #[arg(long, default_value = fdbench_core::alignment::SCORE_COLUMN)]
    pub score_key: String,
    /// Receives <ladder>.align.json, <ladder>.align.md and <ladder>.plot.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConsistencyArgs {
    #[arg(long, required = true)]
    pub ladder: Vec<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub markdown: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Ladder specification (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "SIM")]
    pub ladder_id: String,
    #[arg(long, default_value_t = 10)]
    pub kid_blocks: usize,
}
