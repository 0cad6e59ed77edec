//! The "filter" stage: filtered full rankings and top-k candidate sets.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::{evaluate, MetricsReport};
use crate::kg::{Direction, EntityId, KnowledgeGraph, RelationId, Split, Triple};
use crate::kge::EmbeddingModel;

/// An incomplete triple `(anchor, relation, ?)` or `(?, relation, anchor)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub direction: Direction,
    pub anchor: EntityId,
    pub relation: RelationId,
    pub target: Option<EntityId>,
    pub split: Option<Split>,
}

impl Query {
    pub fn from_triple(split: Split, index: usize, t: Triple, direction: Direction) -> Self {
        let (anchor, target) = match direction {
            Direction::Tail => (t.head, t.tail),
            Direction::Head => (t.tail, t.head),
        };
        Self {
            id: format!("{}-{index}-{}", split.as_str(), direction.as_str()),
            direction,
            anchor,
            relation: t.relation,
            target: Some(target),
            split: Some(split),
        }
    }

    /// The full triple when the target is known.
    pub fn triple(&self) -> Option<Triple> {
        self.target.map(|target| match self.direction {
            Direction::Tail => Triple::new(self.anchor, self.relation, target),
            Direction::Head => Triple::new(target, self.relation, self.anchor),
        })
    }
}

/// Tail then head query for every triple of a split, in triple order.
pub fn split_queries(kg: &KnowledgeGraph, split: Split) -> Vec<Query> {
    kg.split(split)
        .iter()
        .enumerate()
        .flat_map(|(i, &t)| {
            [Direction::Tail, Direction::Head].map(|d| Query::from_triple(split, i, t, d))
        })
        .collect()
}

/// Entities known to complete the query in any split.
pub fn known_answers<'a>(kg: &'a KnowledgeGraph, q: &Query) -> &'a [EntityId] {
    match q.direction {
        Direction::Tail => kg.true_tails(q.anchor, q.relation),
        Direction::Head => kg.true_heads(q.relation, q.anchor),
    }
}

/// Descending score, then ascending entity id.
pub fn rank_order(a: &(EntityId, f32), b: &(EntityId, f32)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Filtered ranking of all entities for a query with a known target.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredRanking {
    /// `(entity, score)` best first; other known answers removed.
    pub entries: Vec<(EntityId, f32)>,
    /// 1-based position of the target in `entries`.
    pub target_rank: usize,
}

impl FilteredRanking {
    pub fn target_score(&self) -> f32 {
        self.entries[self.target_rank - 1].1
    }
}

pub fn rank_filtered(
    model: &EmbeddingModel,
    kg: &KnowledgeGraph,
    q: &Query,
) -> Result<FilteredRanking> {
    let target = q.target.ok_or(Error::MissingTarget)?;
    kg.check_entity(target)?;
    let scores = model.score_all(q.direction, q.anchor, q.relation)?;
    let known = known_answers(kg, q);
    let mut entries: Vec<(EntityId, f32)> = scores
        .into_iter()
        .enumerate()
        .filter(|(e, _)| *e == target || known.binary_search(e).is_err())
        .collect();
    entries.sort_unstable_by(rank_order);
    let target_rank = entries
        .iter()
        .position(|(e, _)| *e == target)
        .map(|p| p + 1)
        .ok_or(Error::MissingTarget)?;
    Ok(FilteredRanking {
        entries,
        target_rank,
    })
}

/// Filtered rank of the target without materializing the ordering.
pub fn filtered_target_rank(
    model: &EmbeddingModel,
    kg: &KnowledgeGraph,
    q: &Query,
) -> Result<usize> {
    let target = q.target.ok_or(Error::MissingTarget)?;
    kg.check_entity(target)?;
    let scores = model.score_all(q.direction, q.anchor, q.relation)?;
    let known = known_answers(kg, q);
    let t = (target, scores[target]);
    let ahead = scores
        .iter()
        .enumerate()
        .filter(|&(e, &s)| {
            e != target
                && rank_order(&(e, s), &t) == Ordering::Less
                && known.binary_search(&e).is_err()
        })
        .count();
    Ok(ahead + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateMode {
    /// The target replaces the last candidate when it falls outside the top k.
    Train,
    Eval,
}

/// Top-k candidates of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub query: Query,
    /// `(entity, filter score)`, scores non-increasing.
    pub candidates: Vec<(EntityId, f32)>,
    pub k: usize,
    /// Whether the target was in the unforced top k.
    pub target_in_topk: bool,
    /// Filtered rank of the target before any forcing.
    pub raw_target_rank: Option<usize>,
    pub forced_inclusion: bool,
}

impl CandidateSet {
    pub fn ids(&self) -> Vec<EntityId> {
        self.candidates.iter().map(|c| c.0).collect()
    }

    pub fn contains(&self, e: EntityId) -> bool {
        self.candidates.iter().any(|c| c.0 == e)
    }
}

fn check_k(kg: &KnowledgeGraph, k: usize) -> Result<()> {
    if k == 0 || k > kg.num_entities() {
        return Err(Error::KOutOfRange {
            k,
            max: kg.num_entities(),
        });
    }
    Ok(())
}

/// Cuts a filtered ranking to its top k.
pub fn candidates_from_ranking(
    query: &Query,
    ranking: &FilteredRanking,
    k: usize,
    mode: CandidateMode,
) -> CandidateSet {
    let take = k.min(ranking.entries.len());
    let mut candidates = ranking.entries[..take].to_vec();
    let target_in_topk = ranking.target_rank <= take;
    let mut forced_inclusion = false;
    if mode == CandidateMode::Train && !target_in_topk {
        let last = candidates.len() - 1;
        candidates[last] = ranking.entries[ranking.target_rank - 1];
        forced_inclusion = true;
    }
    CandidateSet {
        query: query.clone(),
        candidates,
        k,
        target_in_topk,
        raw_target_rank: Some(ranking.target_rank),
        forced_inclusion,
    }
}

pub fn topk_candidates(
    model: &EmbeddingModel,
    kg: &KnowledgeGraph,
    query: &Query,
    k: usize,
    mode: CandidateMode,
) -> Result<CandidateSet> {
    check_k(kg, k)?;
    let ranking = rank_filtered(model, kg, query)?;
    Ok(candidates_from_ranking(query, &ranking, k, mode))
}

/// Filtered target ranks of every query of a split, in query order.
pub fn split_ranks(
    model: &EmbeddingModel,
    kg: &KnowledgeGraph,
    split: Split,
) -> Result<Vec<(Direction, usize)>> {
    split_queries(kg, split)
        .par_iter()
        .map(|q| Ok((q.direction, filtered_target_rank(model, kg, q)?)))
        .collect()
}

/// Filter-only MRR / Hits@N on a split.
pub fn filter_metrics(
    model: &EmbeddingModel,
    kg: &KnowledgeGraph,
    split: Split,
) -> Result<MetricsReport> {
    evaluate(&split_ranks(model, kg, split)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankBucket {
    pub from: usize,
    /// Inclusive upper bound; `None` means unbounded.
    pub to: Option<usize>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub k: usize,
    pub queries: usize,
    pub tail: f64,
    pub head: f64,
    pub combined: f64,
    pub histogram: Vec<RankBucket>,
}

const BUCKET_EDGES: [usize; 7] = [1, 3, 10, 20, 50, 100, 1000];

/// Recall@k per direction, from precomputed filtered ranks.
pub fn recall_from_ranks(ranks: &[(Direction, usize)], k: usize) -> RecallReport {
    let recall = |dir: Option<Direction>| {
        let sel: Vec<usize> = ranks
            .iter()
            .filter(|(d, _)| dir.is_none_or(|x| x == *d))
            .map(|&(_, r)| r)
            .collect();
        if sel.is_empty() {
            0.0
        } else {
            sel.iter().filter(|&&r| r <= k).count() as f64 / sel.len() as f64
        }
    };
    let mut histogram = Vec::with_capacity(BUCKET_EDGES.len() + 1);
    let mut from = 1;
    for &edge in &BUCKET_EDGES {
        histogram.push(RankBucket {
            from,
            to: Some(edge),
            count: ranks
                .iter()
                .filter(|(_, r)| (from..=edge).contains(r))
                .count(),
        });
        from = edge + 1;
    }
    histogram.push(RankBucket {
        from,
        to: None,
        count: ranks.iter().filter(|(_, r)| *r >= from).count(),
    });
    RecallReport {
        k,
        queries: ranks.len(),
        tail: recall(Some(Direction::Tail)),
        head: recall(Some(Direction::Head)),
        combined: recall(None),
        histogram,
    }
}

pub fn recall_report(
    model: &EmbeddingModel,
    kg: &KnowledgeGraph,
    split: Split,
    k: usize,
) -> Result<RecallReport> {
    check_k(kg, k)?;
    Ok(recall_from_ranks(&split_ranks(model, kg, split)?, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::LabeledTriple;
    use crate::kge::ModelKind;

    fn lab(rows: &[(&str, &str, &str)]) -> Vec<LabeledTriple> {
        rows.iter()
            .map(|(h, r, t)| (h.to_string(), r.to_string(), t.to_string()))
            .collect()
    }

    /// TransE over 1-d entities: entity i sits at position `pos[i]`, the single
    /// relation translates by +1.
    fn line_model(pos: &[f32]) -> EmbeddingModel {
        EmbeddingModel::from_parts(ModelKind::TransE, 1, 1.0, 0, pos.to_vec(), vec![1.0]).unwrap()
    }

    #[test]
    fn unique_best_target_ranks_first() {
        let kg = KnowledgeGraph::from_labeled(&lab(&[("a", "r", "b"), ("b", "r", "c")]), &[], &[])
            .unwrap();
        let m = line_model(&[0.0, 1.0, 2.0]);
        let q = Query::from_triple(Split::Train, 0, kg.train()[0], Direction::Tail);
        let r = rank_filtered(&m, &kg, &q).unwrap();
        assert_eq!(r.target_rank, 1);
        assert_eq!(filtered_target_rank(&m, &kg, &q).unwrap(), 1);
    }

    #[test]
    fn ties_break_by_ascending_id() {
        // c and d tie at distance 0.5 from a + r; c has the lower id.
        let kg = KnowledgeGraph::from_labeled(
            &lab(&[("a", "r", "b"), ("x", "r", "c"), ("x", "r", "d")]),
            &[],
            &lab(&[("a", "r", "d")]),
        )
        .unwrap();
        let (a, c, d) = (0, 3, 4);
        assert_eq!(kg.entity_name(c), "c");
        let mut pos = vec![0.0f32; kg.num_entities()];
        pos[a] = 0.0;
        pos[1] = 50.0; // b, a known answer, filtered out anyway
        pos[2] = 70.0; // x
        pos[c] = 1.5;
        pos[d] = 1.5;
        let m = line_model(&pos);
        let q = Query::from_triple(Split::Test, 0, kg.test()[0], Direction::Tail);
        let r = rank_filtered(&m, &kg, &q).unwrap();
        assert_eq!(r.entries[0].0, c);
        assert_eq!(r.target_rank, 2);
    }

    #[test]
    fn train_mode_forces_target_into_last_slot() {
        let kg = KnowledgeGraph::from_labeled(
            &lab(&[
                ("a", "r", "b"),
                ("a", "s", "c"),
                ("c", "s", "d"),
                ("d", "s", "e"),
            ]),
            &[],
            &[],
        )
        .unwrap();
        // target b far from a + r
        let m = line_model(&[0.0, 9.0, 1.0, 1.5, 2.0]);
        let q = Query::from_triple(Split::Train, 0, kg.train()[0], Direction::Tail);
        let eval = topk_candidates(&m, &kg, &q, 2, CandidateMode::Eval).unwrap();
        assert!(!eval.contains(1));
        assert!(!eval.forced_inclusion);
        let train = topk_candidates(&m, &kg, &q, 2, CandidateMode::Train).unwrap();
        assert_eq!(train.candidates.len(), 2);
        assert_eq!(train.candidates[1].0, 1);
        assert!(train.forced_inclusion);
        assert!(!train.target_in_topk);
        assert_eq!(train.raw_target_rank, Some(5));
        assert!(train.candidates[0].1 >= train.candidates[1].1);
    }

    #[test]
    fn k_bounds() {
        let kg = KnowledgeGraph::from_labeled(&lab(&[("a", "r", "b")]), &[], &[]).unwrap();
        let m = line_model(&[0.0, 1.0]);
        let q = Query::from_triple(Split::Train, 0, kg.train()[0], Direction::Tail);
        assert!(matches!(
            topk_candidates(&m, &kg, &q, 0, CandidateMode::Eval),
            Err(Error::KOutOfRange { .. })
        ));
        assert!(topk_candidates(&m, &kg, &q, 3, CandidateMode::Eval).is_err());
        let all = topk_candidates(&m, &kg, &q, 2, CandidateMode::Eval).unwrap();
        assert!(all.target_in_topk);
    }

    #[test]
    fn missing_target_is_an_error() {
        let kg = KnowledgeGraph::from_labeled(&lab(&[("a", "r", "b")]), &[], &[]).unwrap();
        let m = line_model(&[0.0, 1.0]);
        let mut q = Query::from_triple(Split::Train, 0, kg.train()[0], Direction::Tail);
        q.target = None;
        assert!(matches!(
            rank_filtered(&m, &kg, &q),
            Err(Error::MissingTarget)
        ));
    }

    #[test]
    fn perfect_model_on_single_triple_recalls_at_one() {
        let kg =
            KnowledgeGraph::from_labeled(&lab(&[("a", "r", "b")]), &[], &lab(&[("a", "r", "b")]))
                .unwrap();
        let m = line_model(&[0.0, 1.0]);
        let rep = recall_report(&m, &kg, Split::Test, 1).unwrap();
        assert_eq!(rep.tail, 1.0);
        assert_eq!(rep.head, 1.0);
        assert_eq!(rep.combined, 1.0);
        assert_eq!(rep.histogram[0].count, 2);
    }
}
