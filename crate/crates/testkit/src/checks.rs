//! Library-versus-oracle comparisons on a small graph. Each check returns the
//! number of items compared, or a description of the first mismatch.

use ftg_core::adapter::train_surrogate;
use ftg_core::ego::{
    context_heuristic, extract_ego, prune, ContextConfig, Heuristic, PruneBinding,
};
use ftg_core::eval::{run_pipeline, PipelineConfig, SurrogateGenerator};
use ftg_core::filter::{
    rank_filtered, recall_report, split_queries, split_ranks, CandidateMode, Query,
};
use ftg_core::instruct::{build_split_samples, SampleOptions};
use ftg_core::kg::{Direction, KnowledgeGraph, Split};
use ftg_core::kge::{train, EmbeddingModel, ModelKind, TrainConfig};
use ftg_core::synth::synthetic_kg;

use crate::{
    naive_full_1hop, naive_metrics, naive_prune, naive_ranking, naive_serialize,
    naive_surrogate_rank,
};

pub type Check = Result<usize, String>;

/// A 40-entity graph with one briefly trained model per kind.
pub fn fixture() -> (KnowledgeGraph, Vec<EmbeddingModel>) {
    let kg = synthetic_kg(5, 40, 3, 300).unwrap();
    let models = ModelKind::ALL
        .iter()
        .map(|&kind| {
            let cfg = TrainConfig {
                dim: 8,
                steps: 150,
                batch_size: 32,
                negatives: 8,
                ..TrainConfig::default()
            };
            train(&kg, &cfg, kind).unwrap().model
        })
        .collect();
    (kg, models)
}

fn eval_queries(kg: &KnowledgeGraph) -> Vec<Query> {
    let mut q = split_queries(kg, Split::Valid);
    q.extend(split_queries(kg, Split::Test));
    q
}

pub fn check_ranks(kg: &KnowledgeGraph, model: &EmbeddingModel) -> Check {
    let queries = eval_queries(kg);
    for q in &queries {
        let lib = rank_filtered(model, kg, q).map_err(|e| e.to_string())?;
        let (order, rank) = naive_ranking(model, kg, q);
        let lib_order: Vec<_> = lib.entries.iter().map(|e| e.0).collect();
        if lib.target_rank != rank || lib_order != order {
            return Err(format!(
                "{} {}: library rank {} vs naive {}",
                model.kind(),
                q.id,
                lib.target_rank,
                rank
            ));
        }
    }
    Ok(queries.len())
}

pub fn check_prune(kg: &KnowledgeGraph, model: &EmbeddingModel) -> Check {
    let mut n = 0;
    for q in eval_queries(kg) {
        for eps in [-1.0, 0.0, 0.3] {
            for binding in [PruneBinding::Literal, PruneBinding::Center] {
                let mut ego = extract_ego(kg, q.anchor).map_err(|e| e.to_string())?;
                let skip = q.triple();
                ego.triples.retain(|t| Some(t.triple) != skip);
                let lib = prune(&ego, model, &q, eps, binding).map_err(|e| e.to_string())?;
                let naive = naive_prune(model, kg, &q, eps, binding);
                let same =
                    lib.kept.len() == naive.len()
                        && lib.kept.iter().zip(&naive).all(|(a, b)| {
                            a.ego.triple == b.0 && (a.similarity - b.1).abs() <= 1e-12
                        });
                if !same {
                    return Err(format!(
                        "{} {} eps {eps} {binding:?}: kept sets differ",
                        model.kind(),
                        q.id
                    ));
                }
                n += 1;
            }
        }
    }
    Ok(n)
}

pub fn check_contexts(kg: &KnowledgeGraph, model: &EmbeddingModel) -> Check {
    let mut n = 0;
    for q in eval_queries(kg) {
        for budget in [3500, 60, 12, 2] {
            let cfg = ContextConfig {
                budget_chars: budget,
                ..ContextConfig::default()
            };
            let pruned: Vec<_> = naive_prune(model, kg, &q, cfg.epsilon, cfg.binding)
                .into_iter()
                .map(|(t, _)| t)
                .collect();
            for (h, triples) in [
                (Heuristic::StructurePruned, pruned),
                (Heuristic::Full1Hop, naive_full_1hop(kg, &q)),
            ] {
                let lib = context_heuristic(kg, model, &q, h, &cfg).map_err(|e| e.to_string())?;
                let (text, ents) = naive_serialize(kg, q.anchor, &triples, budget);
                if lib.text != text || lib.entities() != ents {
                    return Err(format!(
                        "{} {} {h} budget {budget}: {:?} vs {:?}",
                        model.kind(),
                        q.id,
                        lib.text,
                        text
                    ));
                }
                n += 1;
            }
        }
    }
    Ok(n)
}

pub fn check_metrics(kg: &KnowledgeGraph, model: &EmbeddingModel) -> Check {
    let queries = split_queries(kg, Split::Test);
    let ranks: Vec<(Direction, usize)> = queries
        .iter()
        .map(|q| (q.direction, naive_ranking(model, kg, q).1))
        .collect();
    let lib_ranks = split_ranks(model, kg, Split::Test).map_err(|e| e.to_string())?;
    if lib_ranks != ranks {
        return Err(format!("{}: split ranks differ", model.kind()));
    }
    let lib = ftg_core::eval::evaluate(&lib_ranks).map_err(|e| e.to_string())?;
    let pick = |d: Option<Direction>| -> Vec<usize> {
        ranks
            .iter()
            .filter(|(x, _)| d.is_none_or(|d| d == *x))
            .map(|r| r.1)
            .collect()
    };
    for (m, d) in [
        (&lib.tail, Some(Direction::Tail)),
        (&lib.head, Some(Direction::Head)),
        (&lib.combined, None),
    ] {
        let want = naive_metrics(&pick(d));
        let got = [m.mrr, m.hits1, m.hits3, m.hits10];
        if got.iter().zip(&want).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Err(format!(
                "{} {d:?}: metrics {got:?} vs {want:?}",
                model.kind()
            ));
        }
    }
    let k = 10;
    let recall = recall_report(model, kg, Split::Test, k).map_err(|e| e.to_string())?;
    let hit = ranks.iter().filter(|r| r.1 <= k).count() as f64 / ranks.len() as f64;
    if (recall.combined - hit).abs() > 1e-12 {
        return Err(format!(
            "{}: recall {} vs {hit}",
            model.kind(),
            recall.combined
        ));
    }
    Ok(ranks.len())
}

/// Surrogate generator through the full pipeline against an independent
/// per-query recomputation.
pub fn check_surrogate_pipeline(kg: &KnowledgeGraph, model: &EmbeddingModel) -> Check {
    let opts = SampleOptions {
        k: 8,
        ..SampleOptions::default()
    };
    let samples = build_split_samples(kg, model, Split::Valid, CandidateMode::Train, &opts)
        .map_err(|e| e.to_string())?;
    let cfg = ftg_core::adapter::SurrogateConfig {
        d_x: 6,
        steps: 60,
        ..Default::default()
    };
    let surrogate = train_surrogate(model, &samples, &cfg)
        .map_err(|e| e.to_string())?
        .surrogate;
    let generator = SurrogateGenerator {
        model,
        surrogate: surrogate.clone(),
    };
    let pcfg = PipelineConfig {
        sample: opts.clone(),
        n_return: 3,
        ..PipelineConfig::default()
    };
    let run = run_pipeline(kg, model, &generator, &pcfg).map_err(|e| e.to_string())?;
    let queries = split_queries(kg, Split::Test);
    let mut ranks = Vec::new();
    for (q, o) in queries.iter().zip(&run.outcomes) {
        let want = naive_surrogate_rank(
            model,
            kg,
            &surrogate,
            q,
            opts.k,
            opts.context.epsilon,
            opts.context.budget_chars,
            3,
        );
        if o.id != q.id || o.rank != want {
            return Err(format!(
                "{} {}: pipeline rank {} vs naive {want}",
                model.kind(),
                q.id,
                o.rank
            ));
        }
        ranks.push(want);
    }
    let want = naive_metrics(&ranks);
    let c = &run.report.metrics.combined;
    let got = [c.mrr, c.hits1, c.hits3, c.hits10];
    if got.iter().zip(&want).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(format!("{}: metrics {got:?} vs {want:?}", model.kind()));
    }
    Ok(ranks.len())
}

/// pruned ⊆ full 1-hop ⊆ two-hop at several thresholds, once through the
/// library's own counter and once from the naive triple sets.
pub fn check_subset_chain(kg: &KnowledgeGraph, model: &EmbeddingModel) -> Check {
    use std::collections::HashSet;
    let mut compared = 0;
    for eps in [-1.0, 0.0, 0.3, 0.9] {
        for binding in [PruneBinding::Literal, PruneBinding::Center] {
            let context = ContextConfig {
                epsilon: eps,
                binding,
                ..ContextConfig::default()
            };
            let cfg = PipelineConfig {
                sample: SampleOptions {
                    context: context.clone(),
                    ..SampleOptions::default()
                },
                ..PipelineConfig::default()
            };
            let lib =
                ftg_core::eval::check_subset_chain(kg, model, &cfg).map_err(|e| e.to_string())?;
            if lib.violations != 0 {
                return Err(format!(
                    "{} eps {eps}: {} library violations",
                    model.kind(),
                    lib.violations
                ));
            }
            for q in split_queries(kg, Split::Test) {
                let pruned: HashSet<_> = naive_prune(model, kg, &q, eps, binding)
                    .into_iter()
                    .map(|p| p.0)
                    .collect();
                let full: HashSet<_> = naive_full_1hop(kg, &q).into_iter().collect();
                let two: HashSet<_> =
                    ftg_core::ego::select_triples(kg, model, &q, Heuristic::TwoHop, &context)
                        .map_err(|e| e.to_string())?
                        .into_iter()
                        .map(|p| p.triple)
                        .collect();
                if !pruned.is_subset(&full) || !full.is_subset(&two) {
                    return Err(format!("{} {} eps {eps}: chain broken", model.kind(), q.id));
                }
                compared += 1;
            }
        }
    }
    Ok(compared)
}
