//! Generators, answer parsing, ranking merge and metrics.

pub mod generator;
pub mod merge;
pub mod metrics;
pub mod parse;
pub mod pipeline;

pub use generator::{
    EchoTop1, Generator, GeneratorSpec, HttpChat, Oracle, Replay, SurrogateGenerator,
};
pub use merge::{merge_ranking, merged_target_rank, Provenance, RankedPrediction};
pub use metrics::{evaluate, Metrics, MetricsReport};
pub use parse::parse_answer;
pub use pipeline::{
    ablate_context, check_subset_chain, run_pipeline, AblationReport, EvalReport, EvalRun,
    PipelineConfig, QueryOutcome, SubsetChainCheck,
};
