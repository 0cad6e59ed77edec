use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use ftg_core::adapter::{load_surrogate, save_surrogate, train_surrogate as fit_surrogate};
use ftg_core::checkpoint::{load_checkpoint, save_checkpoint};
use ftg_core::ego::Heuristic;
use ftg_core::eval::{
    ablate_context as run_ablation, evaluate, run_pipeline, EchoTop1, Generator, GeneratorSpec,
    HttpChat, Oracle, Replay, SurrogateGenerator,
};
use ftg_core::filter::{
    candidates_from_ranking, rank_filtered, recall_from_ranks, split_queries, split_ranks,
    CandidateMode,
};
use ftg_core::instruct::{build_split_samples, emit_jsonl, read_jsonl};
use ftg_core::kg::{kg_stats as stats, Direction, EntityId, KnowledgeGraph, RelationId};
use ftg_core::kge::{train, EmbeddingModel};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Resolved;
use crate::CliError;

pub const RESOLVED_CONFIG: &str = "resolved_config.json";
pub const KG_STATS: &str = "kg_stats.json";
pub const FILTER_CKPT: &str = "filter.ckpt";
pub const TRAIN_REPORT: &str = "train_report.json";
pub const METRICS_FILTER: &str = "metrics_filter.json";
pub const RECALL: &str = "recall.json";
pub const CANDIDATES: &str = "candidates.jsonl";
pub const INSTRUCTIONS_TUNE: &str = "instructions_tune.jsonl";
pub const INSTRUCTIONS_EVAL: &str = "instructions_eval.jsonl";
pub const SURROGATE_CKPT: &str = "surrogate.ckpt";
pub const SURROGATE_REPORT: &str = "surrogate_report.json";
pub const METRICS_FTG: &str = "metrics_ftg.json";
pub const EVAL_REPORT: &str = "eval_report.json";
pub const OUTCOMES: &str = "outcomes.jsonl";
pub const ABLATION: &str = "ablation.json";

fn path(r: &Resolved, name: &str) -> PathBuf {
    r.config.out.join(name)
}

fn write_json<T: Serialize>(r: &Resolved, name: &str, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path(r, name), text)?;
    Ok(())
}

fn write_lines<T: Serialize>(r: &Resolved, name: &str, rows: &[T]) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path(r, name))?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Creates the output directory and snapshots the resolved config into it.
pub fn prepare_out(r: &Resolved) -> Result<(), CliError> {
    let out = &r.config.out;
    let fail = |source| CliError::OutDir {
        path: out.clone(),
        source,
    };
    fs::create_dir_all(out).map_err(fail)?;
    let mut text = serde_json::to_string_pretty(&r.config)?;
    text.push('\n');
    fs::write(out.join(RESOLVED_CONFIG), text).map_err(fail)
}

fn load_model(r: &Resolved, kg: &KnowledgeGraph) -> Result<EmbeddingModel, CliError> {
    let p = path(r, FILTER_CKPT);
    if !p.is_file() {
        return Err(CliError::MissingCheckpoint(p));
    }
    let model = load_checkpoint(&p)?;
    if model.n_entities() != kg.num_entities() || model.n_relations() != kg.num_relations() {
        return Err(CliError::Core(ftg_core::Error::DimensionMismatch(format!(
            "{} holds {} entities / {} relations, dataset has {} / {}",
            p.display(),
            model.n_entities(),
            model.n_relations(),
            kg.num_entities(),
            kg.num_relations()
        ))));
    }
    Ok(model)
}

fn generator<'a>(
    r: &Resolved,
    model: &'a EmbeddingModel,
) -> Result<Box<dyn Generator + 'a>, CliError> {
    Ok(match &r.generator {
        GeneratorSpec::Echo => Box::new(EchoTop1),
        GeneratorSpec::Oracle(p) => Box::new(Oracle {
            p: *p,
            seed: r.oracle_seed(),
        }),
        GeneratorSpec::Replay(p) => Box::new(Replay::load(p)?),
        GeneratorSpec::Http => Box::new(HttpChat::from_env(r.config.http_model.clone())?),
        GeneratorSpec::Surrogate => {
            let p = path(r, SURROGATE_CKPT);
            if !p.is_file() {
                return Err(CliError::MissingCheckpoint(p));
            }
            Box::new(SurrogateGenerator {
                model,
                surrogate: load_surrogate(&p)?,
            })
        }
    })
}

pub fn kg_stats(r: &Resolved) -> Result<String, CliError> {
    let kg = r.config.dataset.load()?;
    let s = stats(&kg);
    write_json(r, KG_STATS, &s)?;
    Ok(format!(
        "kg-stats: {} entities, {} relations, train/valid/test {}/{}/{}, degree mean {:.2} median {:.1}",
        s.entities, s.relations, s.train, s.valid, s.test, s.mean_degree, s.median_degree
    ))
}

pub fn train_filter(r: &Resolved) -> Result<String, CliError> {
    let kg = r.config.dataset.load()?;
    let trained = train(&kg, &r.config.train, r.config.filter)?;
    save_checkpoint(&trained.model, &path(r, FILTER_CKPT))?;
    write_json(r, TRAIN_REPORT, &trained.report)?;
    Ok(format!(
        "train-filter: {} d={} steps={} held-out loss {:.4} -> {:.4}",
        r.config.filter,
        r.config.train.dim,
        trained.report.steps,
        trained.report.initial_heldout_loss,
        trained.report.final_heldout_loss
    ))
}

pub fn eval_filter(r: &Resolved) -> Result<String, CliError> {
    let kg = r.config.dataset.load()?;
    let model = load_model(r, &kg)?;
    let ranks = split_ranks(&model, &kg, r.config.eval_split)?;
    let metrics = evaluate(&ranks)?;
    let recall = recall_from_ranks(&ranks, r.config.k);
    write_json(r, METRICS_FILTER, &metrics)?;
    write_json(r, RECALL, &recall)?;
    let c = &metrics.combined;
    Ok(format!(
        "eval-filter: {} queries, MRR {:.4} H@1 {:.4} H@3 {:.4} H@10 {:.4}, recall@{} {:.4}",
        c.count, c.mrr, c.hits1, c.hits3, c.hits10, recall.k, recall.combined
    ))
}

#[derive(Serialize)]
struct CandidateEntry<'a> {
    id: EntityId,
    name: &'a str,
    score: f32,
}

#[derive(Serialize)]
struct CandidateRecord<'a> {
    id: String,
    direction: Direction,
    anchor: EntityId,
    relation: RelationId,
    target: Option<EntityId>,
    target_rank: usize,
    target_in_topk: bool,
    candidates: Vec<CandidateEntry<'a>>,
}

pub fn dump_candidates(r: &Resolved) -> Result<String, CliError> {
    let kg = r.config.dataset.load()?;
    let model = load_model(r, &kg)?;
    if r.config.k > kg.num_entities() {
        return Err(CliError::Core(ftg_core::Error::KOutOfRange {
            k: r.config.k,
            max: kg.num_entities(),
        }));
    }
    let queries = split_queries(&kg, r.config.eval_split);
    let records: Vec<CandidateRecord> = queries
        .par_iter()
        .map(|q| {
            let ranking = rank_filtered(&model, &kg, q)?;
            let cset = candidates_from_ranking(q, &ranking, r.config.k, CandidateMode::Eval);
            Ok(CandidateRecord {
                id: q.id.clone(),
                direction: q.direction,
                anchor: q.anchor,
                relation: q.relation,
                target: q.target,
                target_rank: ranking.target_rank,
                target_in_topk: cset.target_in_topk,
                candidates: cset
                    .candidates
                    .iter()
                    .map(|&(id, score)| CandidateEntry {
                        id,
                        name: kg.entity_name(id),
                        score,
                    })
                    .collect(),
            })
        })
        .collect::<Result<_, ftg_core::Error>>()?;
    write_lines(r, CANDIDATES, &records)?;
    let hit = records.iter().filter(|c| c.target_in_topk).count();
    Ok(format!(
        "dump-candidates: {} queries, target in top-{} for {hit}",
        records.len(),
        r.config.k
    ))
}

pub fn build_instructions(r: &Resolved) -> Result<String, CliError> {
    let kg = r.config.dataset.load()?;
    let model = load_model(r, &kg)?;
    let opts = r.sample_options();
    let tune = build_split_samples(
        &kg,
        &model,
        r.config.tune_split,
        CandidateMode::Train,
        &opts,
    )?;
    let eval = build_split_samples(&kg, &model, r.config.eval_split, CandidateMode::Eval, &opts)?;
    emit_jsonl(&tune, &path(r, INSTRUCTIONS_TUNE), opts.graph_vec)?;
    emit_jsonl(&eval, &path(r, INSTRUCTIONS_EVAL), opts.graph_vec)?;
    let forced = tune.iter().filter(|s| s.forced_inclusion).count();
    Ok(format!(
        "build-instructions: {} tuning samples ({} split, {forced} forced), {} evaluation samples ({} split)",
        tune.len(),
        r.config.tune_split.as_str(),
        eval.len(),
        r.config.eval_split.as_str()
    ))
}

pub fn train_surrogate(r: &Resolved) -> Result<String, CliError> {
    let kg = r.config.dataset.load()?;
    let model = load_model(r, &kg)?;
    let jsonl = path(r, INSTRUCTIONS_TUNE);
    let samples = if jsonl.is_file() {
        read_jsonl(&jsonl)?
    } else {
        let mut opts = r.sample_options();
        opts.graph_vec = true;
        build_split_samples(
            &kg,
            &model,
            r.config.tune_split,
            CandidateMode::Train,
            &opts,
        )?
    };
    let trained = fit_surrogate(&model, &samples, &r.config.surrogate)?;
    save_surrogate(&trained.surrogate, &path(r, SURROGATE_CKPT))?;
    write_json(r, SURROGATE_REPORT, &trained.report)?;
    Ok(format!(
        "train-surrogate: {} examples, held-out loss {:.4} -> {:.4}",
        trained.report.train_examples,
        trained.report.initial_heldout_loss,
        trained.report.final_heldout_loss
    ))
}

pub fn eval_ftg(r: &Resolved) -> Result<String, CliError> {
    let kg = r.config.dataset.load()?;
    let model = load_model(r, &kg)?;
    let generator = generator(r, &model)?;
    let run = run_pipeline(&kg, &model, generator.as_ref(), &r.pipeline())?;
    write_json(r, METRICS_FTG, &run.report.metrics)?;
    write_json(r, EVAL_REPORT, &run.report)?;
    write_lines(r, OUTCOMES, &run.outcomes)?;
    eprintln!("{}", run.report.render_table());
    let c = &run.report.metrics.combined;
    Ok(format!(
        "eval-ftg: {} with {}, {} queries, MRR {:.4} H@1 {:.4} H@3 {:.4} H@10 {:.4}, {} fallback(s)",
        run.report.generator,
        run.report.heuristic,
        run.report.queries,
        c.mrr,
        c.hits1,
        c.hits3,
        c.hits10,
        run.report.fallbacks
    ))
}

pub fn ablate_context(r: &Resolved) -> Result<String, CliError> {
    let kg = r.config.dataset.load()?;
    let model = load_model(r, &kg)?;
    let generator = generator(r, &model)?;
    let report = run_ablation(
        &kg,
        &model,
        generator.as_ref(),
        &r.pipeline(),
        &Heuristic::ALL,
    )?;
    write_json(r, ABLATION, &report)?;
    eprint!("{}", report.render_table());
    let hits: Vec<String> = Heuristic::ALL
        .iter()
        .filter_map(|h| {
            report
                .heuristics
                .get(h.as_str())
                .map(|e| format!("{h} {:.4}", e.metrics.combined.hits1))
        })
        .collect();
    Ok(format!(
        "ablate-context: H@1 {}; subset chain violations {}",
        hits.join(", "),
        report.subset_chain.violations
    ))
}
