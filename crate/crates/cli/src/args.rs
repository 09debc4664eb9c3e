use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ccs", version, about = "Optimal cache placement for coded caching under nonuniform popularity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal placement for each cache size
    Solve(CommonArgs),
    /// Rates and lower bounds over a cache-size grid
    Sweep(CommonArgs),
    /// Subpacketization of the optimal placement over a cache-size grid
    Subpkt(CommonArgs),
    /// Certify against the LP oracle, simulate delivery, decode
    Verify(CommonArgs),
}

/// Flags shared by all commands; each overrides the same key of `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Number of files
    #[arg(long = "N")]
    pub n_files: Option<usize>,
    /// Number of users
    #[arg(long = "K")]
    pub k_users: Option<usize>,
    /// Cache size(s) per user, comma separated
    #[arg(long = "M", value_delimiter = ',')]
    pub cache: Option<Vec<f64>>,
    /// Cache-size grid lo:hi:step (inclusive)
    #[arg(long = "M-grid")]
    pub cache_grid: Option<String>,
    /// Zipf exponent
    #[arg(long)]
    pub zipf: Option<f64>,
    /// Explicit popularities, comma separated (fractions like 5/9 allowed)
    #[arg(long)]
    pub probs: Option<String>,
    /// Step popularity p:count,... (fractions allowed)
    #[arg(long)]
    pub step: Option<String>,
    /// Monte Carlo trials
    #[arg(long)]
    pub trials: Option<usize>,
    /// Random seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format: json or csv
    #[arg(long)]
    pub format: Option<String>,
    /// JSON config file with the same keys as the flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Placement JSON to check instead of solving (verify)
    #[arg(long)]
    pub placement: Option<PathBuf>,
}
