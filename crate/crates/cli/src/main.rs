//! `ftg`: one entry point for every stage of the filter-then-generate pipeline.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("missing checkpoint {0} (run the stage that writes it first)")]
    MissingCheckpoint(PathBuf),

    #[error("output directory {path}: {source}")]
    OutDir {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] ftg_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use ftg_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::InvalidConfig(_) | E::KOutOfRange { .. }) => 2,
            CliError::MissingCheckpoint(_) => 3,
            CliError::Core(E::Unknown { .. }) => 4,
            CliError::OutDir { .. } => 5,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ftg",
    version,
    about = "Filter-then-generate knowledge graph completion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    epsilon: Option<f64>,
    /// structure_pruned, random_walk, full_1hop or two_hop.
    #[arg(long, global = true)]
    heuristic: Option<String>,
    /// echo, oracle[:p], replay:PATH, http or surrogate.
    #[arg(long, global = true)]
    generator: Option<String>,
    #[arg(long = "n-return", global = true)]
    n_return: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Entity, relation and split counts plus degree statistics.
    KgStats,
    /// Train the embedding filter and write its checkpoint.
    TrainFilter,
    /// Filtered MRR / Hits@N and recall@k of the filter alone.
    EvalFilter,
    /// Top-k candidates per evaluation query.
    DumpCandidates,
    /// Instruction datasets for tuning and evaluation.
    BuildInstructions,
    /// Train the surrogate reranker on the tuning split.
    TrainSurrogate,
    /// Full pipeline evaluation with the chosen generator.
    EvalFtg,
    /// One evaluation per context heuristic.
    AblateContext,
}

fn run(cli: Cli) -> Result<String, CliError> {
    let file = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let resolved = file.resolve(Overrides {
        out: cli.out,
        seed: cli.seed,
        k: cli.k,
        epsilon: cli.epsilon,
        heuristic: cli.heuristic,
        generator: cli.generator,
        n_return: cli.n_return,
    })?;
    commands::prepare_out(&resolved)?;
    match cli.command {
        Command::KgStats => commands::kg_stats(&resolved),
        Command::TrainFilter => commands::train_filter(&resolved),
        Command::EvalFilter => commands::eval_filter(&resolved),
        Command::DumpCandidates => commands::dump_candidates(&resolved),
        Command::BuildInstructions => commands::build_instructions(&resolved),
        Command::TrainSurrogate => commands::train_surrogate(&resolved),
        Command::EvalFtg => commands::eval_ftg(&resolved),
        Command::AblateContext => commands::ablate_context(&resolved),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
