use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "qdbc",
    version,
    about = "Reproduce the distance-based quantum classifier experiments"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand. Unset options fall back to the
/// config file, then to the documented default.
#[derive(Debug, Default, Args)]
pub struct Common {
    /// Iris-style CSV (bundled copy when omitted)
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// normalize, standardize or minmax [default: minmax]
    #[arg(long, global = true)]
    pub preprocess: Option<String>,
    /// Master seed [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (stdout when omitted)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// csv or text [default: csv]
    #[arg(long, global = true)]
    pub format: Option<String>,
    /// TOML file with defaults; flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Species in class order A,B,C,... (first appearance when omitted)
    #[arg(long, global = true, value_delimiter = ',')]
    pub class_order: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Leave-one-out post-selection, conditional and success tables
    Tables(TablesArgs),
    /// Per-step open quantum walk success curves
    Walk(WalkArgs),
    /// One-step versus two-step recycling comparison
    Recycle(RecycleArgs),
    /// Preparation circuit fidelity sweep
    PrepCheck(PrepCheckArgs),
    /// Classify one feature vector and print the transcript
    Classify(ClassifyArgs),
}

#[derive(Debug, Default, Args)]
pub struct TablesArgs {
    /// full or per-fold preprocessing statistics [default: full]
    #[arg(long)]
    pub stats: Option<String>,
}

#[derive(Debug, Default, Args)]
pub struct WalkArgs {
    /// Number of steps [default: 1000]
    #[arg(long)]
    pub steps: Option<usize>,
    /// clustered or interleaved [default: clustered]
    #[arg(long)]
    pub scenario: Option<String>,
    /// cycle, complete or bipartite [default: cycle]
    #[arg(long)]
    pub graph: Option<String>,
    /// mid-<class> or node:<index> [default: mid-A for clustered, node:0 otherwise]
    #[arg(long)]
    pub start: Option<String>,
    /// blocks or marginal [default: blocks]
    #[arg(long)]
    pub engine: Option<String>,
}

#[derive(Debug, Default, Args)]
pub struct RecycleArgs {
    /// Two class names [default: A,B]
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// complete or bipartite [default: complete]
    #[arg(long)]
    pub graph: Option<String>,
    /// Compare every class pair instead
    #[arg(long)]
    pub all_pairs: bool,
}

#[derive(Debug, Default, Args)]
pub struct PrepCheckArgs {
    /// 2 or 4 [default: 2]
    #[arg(long)]
    pub features: Option<usize>,
    /// Random (test, sample) pairs [default: 1000]
    #[arg(long)]
    pub trials: Option<usize>,
    /// Use the fixed four-feature template instead of the general circuit
    #[arg(long)]
    pub template: bool,
}

#[derive(Debug, Default, Args)]
pub struct ClassifyArgs {
    /// Raw feature values, comma separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub vector: Vec<f64>,
    /// sample or recycle [default: sample]
    #[arg(long)]
    pub method: Option<String>,
    /// Attempt cap for sampling, step cap for recycling [default: 1000 / 2]
    #[arg(long)]
    pub max_steps: Option<usize>,
}
