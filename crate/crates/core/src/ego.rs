//! Ego-graph extraction, structural pruning and linear serialization, plus
//! the alternative context heuristics used for ablations.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::Query;
use crate::kg::{EntityId, KnowledgeGraph, Triple};
use crate::kge::EmbeddingModel;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeDir {
    Out,
    In,
}

/// A train triple incident to the ego center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EgoTriple {
    pub triple: Triple,
    pub direction: EdgeDir,
}

impl EgoTriple {
    /// The endpoint that is not the center (the center itself for self-loops).
    pub fn neighbor(&self) -> EntityId {
        match self.direction {
            EdgeDir::Out => self.triple.tail,
            EdgeDir::In => self.triple.head,
        }
    }

    fn path(&self) -> PathTriple {
        PathTriple {
            triple: self.triple,
            reached: self.neighbor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EgoGraph {
    pub center: EntityId,
    pub triples: Vec<EgoTriple>,
}

/// Out-triples then in-triples, each in adjacency order. Self-loops are
/// reported once, as out-triples.
pub fn extract_ego(kg: &KnowledgeGraph, center: EntityId) -> Result<EgoGraph> {
    kg.check_entity(center)?;
    let mut triples: Vec<EgoTriple> = kg
        .out_edges(center)
        .iter()
        .map(|&(r, t)| EgoTriple {
            triple: Triple::new(center, r, t),
            direction: EdgeDir::Out,
        })
        .collect();
    triples.extend(
        kg.in_edges(center)
            .iter()
            .filter(|&&(_, h)| h != center)
            .map(|&(r, h)| EgoTriple {
                triple: Triple::new(h, r, center),
                direction: EdgeDir::In,
            }),
    );
    Ok(EgoGraph { center, triples })
}

/// Which entity stands in for `h'` when comparing an in-triple `(e, r', h)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneBinding {
    /// The triple's own head, `e`.
    #[default]
    Literal,
    /// Always the center entity.
    Center,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredTriple {
    pub ego: EgoTriple,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PruneOutcome {
    /// Similarity descending, ties by (relation id, neighbor id, direction).
    pub kept: Vec<ScoredTriple>,
    /// Triples skipped because a concatenated vector had zero norm.
    pub zero_norm: usize,
}

fn concat(model: &EmbeddingModel, e: EntityId, r: usize) -> Vec<f64> {
    let mut v: Vec<f64> = model.entity_row(e).iter().map(|&x| f64::from(x)).collect();
    v.extend(model.relation_vector(r));
    v
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| dot / (na * nb))
}

fn similarity_order(a: &ScoredTriple, b: &ScoredTriple) -> std::cmp::Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then(a.ego.triple.relation.cmp(&b.ego.triple.relation))
        .then(a.ego.neighbor().cmp(&b.ego.neighbor()))
        .then(a.ego.direction.cmp(&b.ego.direction))
}

/// Every ego triple with its cosine similarity to the query, sorted.
pub fn score_ego(
    ego: &EgoGraph,
    model: &EmbeddingModel,
    query: &Query,
    binding: PruneBinding,
) -> Result<PruneOutcome> {
    if query.anchor != ego.center {
        return Err(Error::InvalidConfig(format!(
            "query anchor {} is not the ego center {}",
            query.anchor, ego.center
        )));
    }
    if ego.center >= model.n_entities() || query.relation >= model.n_relations() {
        return Err(Error::DimensionMismatch(
            "model does not cover the query ids".into(),
        ));
    }
    let q = concat(model, query.anchor, query.relation);
    let mut out = PruneOutcome::default();
    for &t in &ego.triples {
        let h_prime = match (binding, t.direction) {
            (PruneBinding::Center, _) => ego.center,
            (PruneBinding::Literal, _) => t.triple.head,
        };
        match cosine(&concat(model, h_prime, t.triple.relation), &q) {
            Some(similarity) => out.kept.push(ScoredTriple { ego: t, similarity }),
            None => out.zero_norm += 1,
        }
    }
    if out.zero_norm > 0 {
        warn!(
            "{} ego triple(s) of entity {} skipped: zero-norm embedding",
            out.zero_norm, ego.center
        );
    }
    out.kept.sort_by(similarity_order);
    Ok(out)
}

/// Keeps ego triples whose similarity to the query exceeds `epsilon`.
pub fn prune(
    ego: &EgoGraph,
    model: &EmbeddingModel,
    query: &Query,
    epsilon: f64,
    binding: PruneBinding,
) -> Result<PruneOutcome> {
    let mut out = score_ego(ego, model, query, binding)?;
    out.kept.retain(|s| s.similarity > epsilon);
    Ok(out)
}

/// A traversed triple and the entity the traversal reached through it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathTriple {
    pub triple: Triple,
    pub reached: EntityId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializedContext {
    pub center: EntityId,
    /// Triples that fit in the budget, in serialization order.
    pub kept_triples: Vec<PathTriple>,
    /// Center name, then relation and (first-seen) entity names.
    pub tokens: Vec<String>,
    pub text: String,
}

impl SerializedContext {
    pub fn is_empty(&self) -> bool {
        self.kept_triples.is_empty()
    }

    /// Distinct entities of the kept triples plus the center, ascending.
    pub fn entities(&self) -> Vec<EntityId> {
        let mut set = BTreeSet::from([self.center]);
        for p in &self.kept_triples {
            set.insert(p.triple.head);
            set.insert(p.triple.tail);
        }
        set.into_iter().collect()
    }
}

pub const SEPARATOR: &str = ", ";

/// Renders triples in order, dropping repeated entity names, until the next
/// triple would push the text past `budget_chars` characters.
pub fn serialize_bfs(
    kg: &KnowledgeGraph,
    center: EntityId,
    triples: &[PathTriple],
    budget_chars: usize,
) -> SerializedContext {
    let center_name = kg.entity_name(center);
    let mut len = center_name.chars().count();
    let mut text = String::from(center_name);
    if len > budget_chars {
        text = center_name.chars().take(budget_chars).collect();
        return SerializedContext {
            center,
            kept_triples: Vec::new(),
            tokens: vec![text.clone()],
            text,
        };
    }
    let mut tokens = vec![center_name.to_string()];
    let mut seen: HashSet<EntityId> = HashSet::from([center]);
    let mut kept = Vec::new();
    let sep = SEPARATOR.chars().count();
    for p in triples {
        let rel = kg.relation_name(p.triple.relation);
        let mut added = sep + rel.chars().count();
        let new_entity = !seen.contains(&p.reached);
        let ent = kg.entity_name(p.reached);
        if new_entity {
            added += sep + ent.chars().count();
        }
        if len + added > budget_chars {
            break;
        }
        len += added;
        tokens.push(rel.to_string());
        text.push_str(SEPARATOR);
        text.push_str(rel);
        if new_entity {
            seen.insert(p.reached);
            tokens.push(ent.to_string());
            text.push_str(SEPARATOR);
            text.push_str(ent);
        }
        kept.push(*p);
    }
    SerializedContext {
        center,
        kept_triples: kept,
        tokens,
        text,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    StructurePruned,
    RandomWalk,
    #[serde(rename = "full_1hop")]
    Full1Hop,
    TwoHop,
}

impl Heuristic {
    pub const ALL: [Heuristic; 4] = [
        Heuristic::StructurePruned,
        Heuristic::RandomWalk,
        Heuristic::Full1Hop,
        Heuristic::TwoHop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Heuristic::StructurePruned => "structure_pruned",
            Heuristic::RandomWalk => "random_walk",
            Heuristic::Full1Hop => "full_1hop",
            Heuristic::TwoHop => "two_hop",
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Heuristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Heuristic::ALL
            .into_iter()
            .find(|h| h.as_str() == s)
            .ok_or_else(|| Error::Unknown {
                what: "heuristic",
                name: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextConfig {
    pub epsilon: f64,
    pub budget_chars: usize,
    pub binding: PruneBinding,
    /// Maximum number of random-walk steps.
    pub walk_steps: usize,
    /// Number of first-hop neighbors expanded by `two_hop`, and the number of
    /// second-hop triples taken from each.
    pub two_hop_cap: usize,
    pub seed: u64,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            budget_chars: 3500,
            binding: PruneBinding::Literal,
            walk_steps: 20,
            two_hop_cap: 16,
            seed: 0,
        }
    }
}

fn rel_entity_order(a: &PathTriple, b: &PathTriple) -> std::cmp::Ordering {
    (a.triple.relation, a.reached, a.triple.head, a.triple.tail).cmp(&(
        b.triple.relation,
        b.reached,
        b.triple.head,
        b.triple.tail,
    ))
}

/// The center's ego graph without the query's own triple.
fn query_ego(kg: &KnowledgeGraph, query: &Query) -> Result<EgoGraph> {
    let mut ego = extract_ego(kg, query.anchor)?;
    if let Some(t) = query.triple() {
        ego.triples.retain(|e| e.triple != t);
    }
    Ok(ego)
}

fn random_walk(kg: &KnowledgeGraph, query: &Query, cfg: &ContextConfig) -> Vec<PathTriple> {
    let mut rng = seed::stage_rng(cfg.seed, &format!("ego/walk/{}", query.id));
    let skip = query.triple();
    let mut at = query.anchor;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for _ in 0..cfg.walk_steps {
        let mut moves: Vec<PathTriple> = kg
            .out_edges(at)
            .iter()
            .map(|&(r, t)| PathTriple {
                triple: Triple::new(at, r, t),
                reached: t,
            })
            .collect();
        moves.extend(
            kg.in_edges(at)
                .iter()
                .filter(|&&(_, h)| h != at)
                .map(|&(r, h)| PathTriple {
                    triple: Triple::new(h, r, at),
                    reached: h,
                }),
        );
        moves.retain(|m| Some(m.triple) != skip);
        let Some(&step) = moves.choose(&mut rng) else {
            break;
        };
        if seen.insert(step.triple) {
            out.push(step);
        }
        at = step.reached;
    }
    out
}

fn two_hop(
    kg: &KnowledgeGraph,
    model: &EmbeddingModel,
    query: &Query,
    cfg: &ContextConfig,
) -> Result<Vec<PathTriple>> {
    let ego = query_ego(kg, query)?;
    let mut first: Vec<PathTriple> = ego.triples.iter().map(EgoTriple::path).collect();
    first.sort_by(rel_entity_order);
    let scored = score_ego(&ego, model, query, cfg.binding)?;
    let mut expand = Vec::new();
    for s in &scored.kept {
        let n = s.ego.neighbor();
        if n != query.anchor && !expand.contains(&n) {
            expand.push(n);
            if expand.len() == cfg.two_hop_cap {
                break;
            }
        }
    }
    let skip = query.triple();
    let mut taken: HashSet<Triple> = first.iter().map(|p| p.triple).collect();
    let mut out = first;
    for n in expand {
        let mut hop: Vec<PathTriple> = extract_ego(kg, n)?
            .triples
            .iter()
            .filter(|e| e.triple.head != query.anchor && e.triple.tail != query.anchor)
            .filter(|e| Some(e.triple) != skip)
            .map(EgoTriple::path)
            .collect();
        hop.sort_by(rel_entity_order);
        let mut count = 0;
        for p in hop {
            if count == cfg.two_hop_cap {
                break;
            }
            if taken.insert(p.triple) {
                out.push(p);
                count += 1;
            }
        }
    }
    Ok(out)
}

/// The triples a heuristic would serialize, before the budget is applied.
pub fn select_triples(
    kg: &KnowledgeGraph,
    model: &EmbeddingModel,
    query: &Query,
    kind: Heuristic,
    cfg: &ContextConfig,
) -> Result<Vec<PathTriple>> {
    Ok(match kind {
        Heuristic::StructurePruned => {
            let ego = query_ego(kg, query)?;
            prune(&ego, model, query, cfg.epsilon, cfg.binding)?
                .kept
                .iter()
                .map(|s| s.ego.path())
                .collect()
        }
        Heuristic::Full1Hop => {
            let mut v: Vec<PathTriple> = query_ego(kg, query)?
                .triples
                .iter()
                .map(EgoTriple::path)
                .collect();
            v.sort_by(rel_entity_order);
            v
        }
        Heuristic::RandomWalk => {
            kg.check_entity(query.anchor)?;
            random_walk(kg, query, cfg)
        }
        Heuristic::TwoHop => two_hop(kg, model, query, cfg)?,
    })
}

pub fn context_heuristic(
    kg: &KnowledgeGraph,
    model: &EmbeddingModel,
    query: &Query,
    kind: Heuristic,
    cfg: &ContextConfig,
) -> Result<SerializedContext> {
    let triples = select_triples(kg, model, query, kind, cfg)?;
    Ok(serialize_bfs(kg, query.anchor, &triples, cfg.budget_chars))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{Direction, LabeledTriple, Split};
    use crate::kge::ModelKind;

    fn lab(rows: &[(&str, &str, &str)]) -> Vec<LabeledTriple> {
        rows.iter()
            .map(|(h, r, t)| (h.to_string(), r.to_string(), t.to_string()))
            .collect()
    }

    fn q(anchor: EntityId, relation: usize) -> Query {
        Query {
            id: "q".into(),
            direction: Direction::Tail,
            anchor,
            relation,
            target: None,
            split: None,
        }
    }

    #[test]
    fn isolated_entity_has_empty_ego() {
        let kg =
            KnowledgeGraph::from_labeled(&lab(&[("a", "r", "b")]), &[], &lab(&[("c", "r", "a")]))
                .unwrap();
        assert!(extract_ego(&kg, 2).unwrap().triples.is_empty());
    }

    #[test]
    fn directions_are_tagged() {
        let kg = KnowledgeGraph::from_labeled(
            &lab(&[
                ("a", "r", "b"),
                ("a", "s", "c"),
                ("d", "r", "a"),
                ("b", "r", "c"),
            ]),
            &[],
            &[],
        )
        .unwrap();
        let ego = extract_ego(&kg, 0).unwrap();
        assert_eq!(ego.triples.len(), 3);
        let outs = ego
            .triples
            .iter()
            .filter(|t| t.direction == EdgeDir::Out)
            .count();
        assert_eq!(outs, 2);
        let inn = ego
            .triples
            .iter()
            .find(|t| t.direction == EdgeDir::In)
            .unwrap();
        assert_eq!(kg.entity_name(inn.neighbor()), "d");
    }

    #[test]
    fn self_loop_appears_once() {
        let kg = KnowledgeGraph::from_labeled(&lab(&[("a", "r", "a")]), &[], &[]).unwrap();
        assert_eq!(extract_ego(&kg, 0).unwrap().triples.len(), 1);
    }

    /// Entities a, b, c and relations q, r1, r2 as 2-d TransE vectors so that
    /// the concatenations are the hand-set 4-vectors below.
    fn hand_model() -> (KnowledgeGraph, EmbeddingModel) {
        let kg = KnowledgeGraph::from_labeled(
            &lab(&[("a", "q", "x"), ("a", "r1", "b"), ("c", "r2", "a")]),
            &[],
            &[],
        )
        .unwrap();
        // ids: a0 x1 b2 c3; q0 r1 r2 relation rows
        let entity = vec![1.0, 0.0, 5.0, 5.0, 7.0, 7.0, 0.0, 1.0];
        let relation = vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let m = EmbeddingModel::from_parts(ModelKind::TransE, 2, 1.0, 0, entity, relation).unwrap();
        (kg, m)
    }

    #[test]
    fn prune_keeps_aligned_neighbors() {
        let (kg, m) = hand_model();
        let ego = extract_ego(&kg, 0).unwrap();
        // query concat (1,0,0,0); out triples share it (cos 1); in-triple from c is (0,1,0,0)
        let out = prune(&ego, &m, &q(0, 0), 0.5, PruneBinding::Literal).unwrap();
        assert_eq!(out.kept.len(), 2);
        assert!(out.kept.iter().all(|s| s.ego.direction == EdgeDir::Out));
        let all = prune(&ego, &m, &q(0, 0), -1.0001, PruneBinding::Literal).unwrap();
        assert_eq!(all.kept.len(), 3);
        assert_eq!(all.kept[2].similarity, 0.0);
        let center = prune(&ego, &m, &q(0, 0), 0.5, PruneBinding::Center).unwrap();
        assert_eq!(center.kept.len(), 3);
        assert!(prune(&ego, &m, &q(0, 0), 1.0, PruneBinding::Literal)
            .unwrap()
            .kept
            .is_empty());
    }

    #[test]
    fn zero_norm_triples_are_counted() {
        let (kg, mut m) = hand_model();
        m.entity[6] = 0.0;
        m.entity[7] = 0.0;
        let ego = extract_ego(&kg, 0).unwrap();
        let out = prune(&ego, &m, &q(0, 0), -2.0, PruneBinding::Literal).unwrap();
        assert_eq!(out.zero_norm, 1);
        assert_eq!(out.kept.len(), 2);
    }

    #[test]
    fn serialization_follows_order_and_dedups() {
        let kg = KnowledgeGraph::from_labeled(
            &lab(&[("h", "r1", "e1"), ("h", "r2", "e2"), ("e1", "r3", "h")]),
            &[],
            &[],
        )
        .unwrap();
        let p = |h, r, t, reached| PathTriple {
            triple: Triple::new(h, r, t),
            reached,
        };
        let ctx = serialize_bfs(&kg, 0, &[], 100);
        assert_eq!(ctx.tokens, vec!["h"]);
        let ctx = serialize_bfs(&kg, 0, &[p(0, 0, 1, 1), p(0, 1, 2, 2), p(1, 2, 0, 1)], 100);
        assert_eq!(ctx.tokens, vec!["h", "r1", "e1", "r2", "e2", "r3"]);
        assert_eq!(ctx.text, "h, r1, e1, r2, e2, r3");
        // budget cuts before the second triple
        let ctx = serialize_bfs(&kg, 0, &[p(0, 0, 1, 1), p(0, 1, 2, 2)], 12);
        assert_eq!(ctx.text, "h, r1, e1");
        assert_eq!(ctx.kept_triples.len(), 1);
        let ctx = serialize_bfs(&kg, 0, &[p(0, 0, 1, 1)], 0);
        assert_eq!(ctx.text, "");
    }

    #[test]
    fn unknown_heuristic_is_rejected() {
        assert!(matches!(
            "three_hop".parse::<Heuristic>(),
            Err(Error::Unknown {
                what: "heuristic",
                ..
            })
        ));
        for h in Heuristic::ALL {
            assert_eq!(h.as_str().parse::<Heuristic>().unwrap(), h);
            assert_eq!(serde_json::to_string(&h).unwrap(), format!("\"{h}\""));
        }
    }

    #[test]
    fn two_hop_reaches_second_hop_and_walk_is_deterministic() {
        let kg = KnowledgeGraph::from_labeled(&lab(&[("a", "r", "b"), ("b", "r", "c")]), &[], &[])
            .unwrap();
        let m = EmbeddingModel::init(ModelKind::RotatE, 3, 1, 4, 6.0, 1).unwrap();
        let cfg = ContextConfig::default();
        let ctx = context_heuristic(&kg, &m, &q(0, 0), Heuristic::TwoHop, &cfg).unwrap();
        assert!(ctx.tokens.contains(&"c".to_string()), "{:?}", ctx.tokens);
        let full = context_heuristic(&kg, &m, &q(0, 0), Heuristic::Full1Hop, &cfg).unwrap();
        assert_eq!(full.text, "a, r, b");
        let w1 = context_heuristic(&kg, &m, &q(0, 0), Heuristic::RandomWalk, &cfg).unwrap();
        let w2 = context_heuristic(&kg, &m, &q(0, 0), Heuristic::RandomWalk, &cfg).unwrap();
        assert_eq!(w1, w2);
        assert!(!w1.is_empty());
    }

    #[test]
    fn query_triple_is_excluded() {
        let kg = KnowledgeGraph::from_labeled(&lab(&[("a", "r", "b"), ("a", "s", "c")]), &[], &[])
            .unwrap();
        let m = EmbeddingModel::init(ModelKind::TransE, 3, 2, 4, 6.0, 1).unwrap();
        let query = Query::from_triple(Split::Train, 0, kg.train()[0], Direction::Tail);
        let ctx = context_heuristic(
            &kg,
            &m,
            &query,
            Heuristic::Full1Hop,
            &ContextConfig::default(),
        )
        .unwrap();
        assert_eq!(ctx.text, "a, s, c");
    }
}
