//! Batch command-line surface for the norm-completion pipeline.

mod commands;
mod config_file;
mod error;
mod manifest;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "featnorm",
    version,
    about = "Complete and evaluate binary concept-by-feature norm matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a norm table, threshold it to binary, and report its shape.
    Ingest(IngestArgs),
    /// Write the full singular value profile of a matrix for scree plotting.
    Scree(ScreeArgs),
    /// Fill a machine feature matrix by querying an oracle for every cell.
    OracleFill(OracleFillArgs),
    /// Leave-one-out comparison of completed versus raw machine vectors.
    Loo(LooArgs),
    /// Holdout-fraction sweep of the completion improvement.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Cell delimiter for tables ("tab" or a single character).
    #[arg(long, global = true)]
    delimiter: Option<String>,
    /// Optional TOML config file layered under the flags (flags win).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Norm table to parse.
    #[arg(long)]
    input: PathBuf,
    /// Where to write the thresholded binary matrix.
    #[arg(long)]
    output: PathBuf,
    /// Interpretation of the cells: rater counts or already-binary.
    #[arg(long, value_parser = ["counts", "binary"])]
    value_kind: Option<String>,
    /// Number of raters behind a counts table.
    #[arg(long)]
    rater_total: Option<u32>,
    /// Minimum count that becomes a 1 (defaults to the rater total).
    #[arg(long)]
    threshold: Option<u32>,
}

#[derive(Args)]
struct ScreeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Real-valued labeled matrix to decompose.
    #[arg(long)]
    input: PathBuf,
    /// Two-column output file (index, singular value).
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct OracleFillArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Binary matrix whose labels define the cells to query (and, in
    /// synthetic mode, the ground truth).
    #[arg(long)]
    human: PathBuf,
    /// Where to write the machine matrix.
    #[arg(long)]
    output: PathBuf,
    /// Oracle backend.
    #[arg(long, value_parser = ["synthetic", "live"])]
    mode: String,
    /// JSONL response cache (defaults to <output>.cache.jsonl).
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Seed for the synthetic oracle.
    #[arg(long)]
    seed: Option<u64>,
    /// Synthetic false-positive rate (0 -> 1 flips).
    #[arg(long)]
    fp_rate: Option<f64>,
    /// Synthetic false-negative rate (1 -> 0 flips).
    #[arg(long)]
    fn_rate: Option<f64>,
    /// Live endpoint URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// Live model identifier.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long)]
    max_retries: Option<u32>,
    /// Minimum spacing between live requests, in milliseconds.
    #[arg(long)]
    min_interval_ms: Option<u64>,
    /// Environment variable holding the bearer token (empty disables auth).
    #[arg(long)]
    auth_env: Option<String>,
    /// JSON map of concept -> plural form for the prompt template.
    #[arg(long)]
    plural_overrides: Option<PathBuf>,
}

#[derive(Args)]
struct LooArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    human: PathBuf,
    #[arg(long)]
    machine: PathBuf,
    /// Output prefix; writes <out>.json, <out>.csv, <out>.manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// Truncation rank of the decomposition.
    #[arg(long)]
    rank: Option<usize>,
    /// L2 penalty of the logistic fit.
    #[arg(long)]
    l2: Option<f64>,
    /// Degenerate-rate handling: loglinear, always, or none.
    #[arg(long, value_parser = ["loglinear", "always", "none"])]
    correction: Option<String>,
    /// Probability threshold for binarizing completed vectors.
    #[arg(long)]
    binarize_threshold: Option<f64>,
    /// Worker threads for the per-concept loop (defaults to all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    human: PathBuf,
    #[arg(long)]
    machine: PathBuf,
    /// Output prefix; writes <out>.json, <out>.csv, <out>.manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated holdout fractions (default 0.1 through 0.9).
    #[arg(long)]
    fractions: Option<String>,
    /// Random splits per fraction.
    #[arg(long)]
    repeats: Option<usize>,
    /// Seed for the split randomness.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long, value_parser = ["loglinear", "always", "none"])]
    correction: Option<String>,
    #[arg(long)]
    binarize_threshold: Option<f64>,
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(args) => commands::ingest(args),
        Command::Scree(args) => commands::scree(args),
        Command::OracleFill(args) => commands::oracle_fill(args),
        Command::Loo(args) => commands::loo(args),
        Command::Sweep(args) => commands::sweep(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
