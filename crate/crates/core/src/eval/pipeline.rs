//! End-to-end evaluation: filter, context, sample, generate, parse, merge.

use std::collections::BTreeMap;
use std::thread;
use std::time::Duration;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generator::Generator;
use super::merge::merged_target_rank;
use super::metrics::{evaluate, MetricsReport};
use super::parse::parse_answer;
use crate::ego::{select_triples, Heuristic};
use crate::error::{Error, Result};
use crate::filter::{recall_from_ranks, split_queries, CandidateMode, RecallReport};
use crate::instruct::{display_names, prepare_query, SampleOptions};
use crate::kg::{Direction, KnowledgeGraph, Split};
use crate::kge::EmbeddingModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub split: Split,
    pub sample: SampleOptions,
    pub n_return: usize,
    pub retries: usize,
    /// First retry delay; doubled on each further attempt.
    pub backoff_ms: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            split: Split::Test,
            sample: SampleOptions::default(),
            n_return: 10,
            retries: 3,
            backoff_ms: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub id: String,
    pub direction: Direction,
    pub filter_rank: usize,
    pub rank: usize,
    pub outputs: Vec<String>,
    /// Candidate positions (filter order) the outputs resolved to.
    pub parsed: Vec<usize>,
    pub fell_back: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub generator: String,
    pub heuristic: Heuristic,
    pub queries: usize,
    pub metrics: MetricsReport,
    pub filter_metrics: MetricsReport,
    pub recall: RecallReport,
    pub forced_inclusion: usize,
    pub unparsed_outputs: usize,
    pub fallbacks: usize,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn render_table(&self) -> String {
        format!(
            "generator {} | heuristic {} | {} queries | recall@{} {:.4}\n{}",
            self.generator,
            self.heuristic,
            self.queries,
            self.recall.k,
            self.recall.combined,
            self.metrics.render_table()
        )
    }
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub report: EvalReport,
    pub outcomes: Vec<QueryOutcome>,
}

fn generate_with_retry(
    generator: &dyn Generator,
    sample: &crate::instruct::InstructionSample,
    cfg: &PipelineConfig,
) -> std::result::Result<Vec<String>, String> {
    let attempts = cfg.retries.max(1);
    let mut last = String::new();
    for attempt in 0..attempts {
        match generator.generate(sample, cfg.n_return) {
            Ok(mut out) => {
                out.truncate(cfg.n_return);
                return Ok(out);
            }
            Err(e) => {
                last = e.to_string();
                if attempt + 1 < attempts && cfg.backoff_ms > 0 {
                    thread::sleep(Duration::from_millis(cfg.backoff_ms << attempt));
                }
            }
        }
    }
    Err(last)
}

fn run_query(
    kg: &KnowledgeGraph,
    model: &EmbeddingModel,
    generator: &dyn Generator,
    query: &crate::filter::Query,
    cfg: &PipelineConfig,
) -> Result<(QueryOutcome, bool, Option<String>)> {
    let prep = prepare_query(kg, model, query, CandidateMode::Eval, &cfg.sample)?;
    let (outputs, warning) = match generate_with_retry(generator, &prep.sample, cfg) {
        Ok(o) => (o, None),
        Err(e) => (
            Vec::new(),
            Some(format!(
                "query {}: generator failed after {} attempt(s), using filter order: {e}",
                query.id,
                cfg.retries.max(1)
            )),
        ),
    };
    let names = display_names(kg, &prep.candidates.ids());
    let parsed: Vec<usize> = outputs
        .iter()
        .filter_map(|o| parse_answer(o, &names))
        .collect();
    let unparsed = parsed.len() < outputs.len();
    let rank = merged_target_rank(&parsed, &prep.candidates, &prep.ranking);
    Ok((
        QueryOutcome {
            id: query.id.clone(),
            direction: query.direction,
            filter_rank: prep.ranking.target_rank,
            rank,
            outputs,
            parsed,
            fell_back: warning.is_some(),
        },
        unparsed,
        warning,
    ))
}

/// Runs every query of `cfg.split` (both directions) through the generator.
/// Generator failures fall back to the filter ranking for that query.
pub fn run_pipeline(
    kg: &KnowledgeGraph,
    model: &EmbeddingModel,
    generator: &dyn Generator,
    cfg: &PipelineConfig,
) -> Result<EvalRun> {
    if cfg.n_return == 0 {
        return Err(Error::InvalidConfig("n_return must be at least 1".into()));
    }
    let queries = split_queries(kg, cfg.split);
    if queries.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    let work = || -> Result<Vec<_>> {
        queries
            .par_iter()
            .map(|q| run_query(kg, model, generator, q, cfg))
            .collect()
    };
    let results = match generator.max_in_flight() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let mut outcomes = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    let mut unparsed_outputs = 0;
    for (o, unparsed, w) in results {
        unparsed_outputs += usize::from(unparsed);
        if let Some(w) = w {
            warn!("{w}");
            warnings.push(w);
        }
        outcomes.push(o);
    }
    let ranks: Vec<(Direction, usize)> = outcomes.iter().map(|o| (o.direction, o.rank)).collect();
    let filter_ranks: Vec<(Direction, usize)> = outcomes
        .iter()
        .map(|o| (o.direction, o.filter_rank))
        .collect();
    let report = EvalReport {
        generator: generator.name(),
        heuristic: cfg.sample.heuristic,
        queries: outcomes.len(),
        metrics: evaluate(&ranks)?,
        filter_metrics: evaluate(&filter_ranks)?,
        recall: recall_from_ranks(&filter_ranks, cfg.sample.k),
        forced_inclusion: 0,
        unparsed_outputs,
        fallbacks: warnings.len(),
        warnings,
    };
    Ok(EvalRun { report, outcomes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetChainCheck {
    pub queries: usize,
    /// Queries where pruned ⊄ full 1-hop or full 1-hop ⊄ two-hop.
    pub violations: usize,
}

/// Checks pruned ⊆ full 1-hop ⊆ two-hop (pre-budget triple sets) per query.
pub fn check_subset_chain(
    kg: &KnowledgeGraph,
    model: &EmbeddingModel,
    cfg: &PipelineConfig,
) -> Result<SubsetChainCheck> {
    let queries = split_queries(kg, cfg.split);
    let ctx = &cfg.sample.context;
    let violations = queries
        .par_iter()
        .map(|q| {
            let set = |h| -> Result<std::collections::HashSet<_>> {
                Ok(select_triples(kg, model, q, h, ctx)?
                    .into_iter()
                    .map(|p| p.triple)
                    .collect())
            };
            let pruned = set(Heuristic::StructurePruned)?;
            let full = set(Heuristic::Full1Hop)?;
            let two = set(Heuristic::TwoHop)?;
            Ok(usize::from(
                !(pruned.is_subset(&full) && full.is_subset(&two)),
            ))
        })
        .sum::<Result<usize>>()?;
    Ok(SubsetChainCheck {
        queries: queries.len(),
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub heuristics: BTreeMap<String, EvalReport>,
    pub subset_chain: SubsetChainCheck,
}

impl AblationReport {
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        for h in Heuristic::ALL {
            if let Some(r) = self.heuristics.get(h.as_str()) {
                s.push_str(&format!("== {h} ==\n{}\n", r.render_table()));
            }
        }
        s.push_str(&format!(
            "subset chain: {} violation(s) over {} queries\n",
            self.subset_chain.violations, self.subset_chain.queries
        ));
        s
    }
}

/// One evaluation per context heuristic.
pub fn ablate_context(
    kg: &KnowledgeGraph,
    model: &EmbeddingModel,
    generator: &dyn Generator,
    cfg: &PipelineConfig,
    heuristics: &[Heuristic],
) -> Result<AblationReport> {
    let mut out = BTreeMap::new();
    for &h in heuristics {
        let mut c = cfg.clone();
        c.sample.heuristic = h;
        out.insert(
            h.as_str().to_string(),
            run_pipeline(kg, model, generator, &c)?.report,
        );
    }
    Ok(AblationReport {
        heuristics: out,
        subset_chain: check_subset_chain(kg, model, cfg)?,
    })
}
