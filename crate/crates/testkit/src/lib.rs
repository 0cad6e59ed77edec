//! Deliberately naive reference computations for cross-checking `ftg-core`.
//!
//! Everything here is written from the definitions with plain loops: no
//! query folding, no adjacency indices, no shared helpers from the library
//! beyond raw parameter access.

#![allow(clippy::needless_range_loop)]

use std::collections::HashSet;

use ftg_core::adapter::{Surrogate, SurrogateExample, SurrogateParams};
use ftg_core::ego::PruneBinding;
use ftg_core::filter::Query;
use ftg_core::kg::{Direction, EntityId, KnowledgeGraph, RelationId, Triple};
use ftg_core::kge::{DenseParams, EmbeddingModel, Example, ModelKind};
use rand::{Rng, SeedableRng};

pub type Rng64 = rand::rngs::StdRng;

pub fn rng(seed: u64) -> Rng64 {
    Rng64::seed_from_u64(seed)
}

fn row(m: &[f32], width: usize, i: usize) -> Vec<f64> {
    m[i * width..(i + 1) * width]
        .iter()
        .map(|&v| f64::from(v))
        .collect()
}

pub fn entity(model: &EmbeddingModel, e: EntityId) -> Vec<f64> {
    row(model.entity_matrix(), model.dim(), e)
}

pub fn relation(model: &EmbeddingModel, r: RelationId) -> Vec<f64> {
    row(model.relation_matrix(), model.relation_width(), r)
}

/// Training logit from first principles. Complex rows are `[re.., im..]`,
/// RotatE relation rows are phases.
pub fn naive_logit(kind: ModelKind, gamma: f64, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let d = h.len();
    let m = d / 2;
    match kind {
        ModelKind::TransE => {
            let mut sq = 0.0;
            for i in 0..d {
                sq += (h[i] + r[i] - t[i]) * (h[i] + r[i] - t[i]);
            }
            gamma - sq.sqrt()
        }
        ModelKind::DistMult => {
            let mut s = 0.0;
            for i in 0..d {
                s += h[i] * r[i] * t[i];
            }
            s
        }
        ModelKind::ComplEx => {
            // Re(<h, r, conj(t)>)
            let mut s = 0.0;
            for i in 0..m {
                let (a, b) = (h[i], h[m + i]);
                let (c, e) = (r[i], r[m + i]);
                let prod_re = a * c - b * e;
                let prod_im = a * e + b * c;
                s += prod_re * t[i] + prod_im * t[m + i];
            }
            s
        }
        ModelKind::RotatE => {
            let mut dist = 0.0;
            for i in 0..m {
                let (a, b) = (h[i], h[m + i]);
                let (c, e) = (r[i].cos(), r[i].sin());
                let re = a * c - b * e - t[i];
                let im = a * e + b * c - t[m + i];
                dist += (re * re + im * im).sqrt();
            }
            gamma - dist
        }
    }
}

/// Ranking score: higher is better. TransE ranks by `-distance`.
pub fn naive_score(model: &EmbeddingModel, h: EntityId, r: RelationId, t: EntityId) -> f64 {
    let gamma = f64::from(model.gamma());
    let s = naive_logit(
        model.kind(),
        gamma,
        &entity(model, h),
        &relation(model, r),
        &entity(model, t),
    );
    match model.kind() {
        ModelKind::TransE => s - gamma,
        _ => s,
    }
}

fn ln_sigmoid(x: f64) -> f64 {
    -(1.0 + (-x).exp()).ln()
}

/// Mean self-adversarial loss with the negative weights held fixed.
pub fn naive_kge_loss(p: &DenseParams, batch: &[Example], weights: &[Vec<f64>]) -> f64 {
    let d = p.dim;
    let w = p.kind.relation_width(d);
    let e = |i: usize| p.entity[i * d..(i + 1) * d].to_vec();
    let r = |i: usize| p.relation[i * w..(i + 1) * w].to_vec();
    let mut total = 0.0;
    for (ex, wts) in batch.iter().zip(weights) {
        let pos = ex.positive;
        let rel = r(pos.relation);
        let mut l = -ln_sigmoid(naive_logit(
            p.kind,
            p.gamma,
            &e(pos.head),
            &rel,
            &e(pos.tail),
        ));
        for (j, &n) in ex.negatives.iter().enumerate() {
            let s = match ex.corrupt {
                Direction::Tail => naive_logit(p.kind, p.gamma, &e(pos.head), &rel, &e(n)),
                Direction::Head => naive_logit(p.kind, p.gamma, &e(n), &rel, &e(pos.tail)),
            };
            l -= wts[j] * ln_sigmoid(-s);
        }
        total += l;
    }
    total / batch.len() as f64
}

/// `|a - n| / max(|a|, |n|)`, or the absolute gap when both are tiny.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-7 {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Central difference of `f` along every coordinate of `x`.
pub fn central_diff(x: &mut [f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + step;
            let up = f(x);
            x[i] = orig - step;
            let down = f(x);
            x[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Worst relative error between the library's KGE gradient and central
/// differences of [`naive_kge_loss`], over every parameter of a tiny model.
pub fn kge_gradcheck(kind: ModelKind, seed: u64) -> f64 {
    let (n_ent, n_rel, dim) = (7, 3, 6);
    let model = EmbeddingModel::init(kind, n_ent, n_rel, dim, 3.0, seed).unwrap();
    let params = DenseParams::from_model(&model);
    let mut g = rng(seed);
    let batch: Vec<Example> = (0..4)
        .map(|_| Example {
            positive: Triple::new(
                g.gen_range(0..n_ent),
                g.gen_range(0..n_rel),
                g.gen_range(0..n_ent),
            ),
            corrupt: if g.gen_bool(0.5) {
                Direction::Tail
            } else {
                Direction::Head
            },
            negatives: (0..3).map(|_| g.gen_range(0..n_ent)).collect(),
        })
        .collect();
    let analytic = ftg_core::kge::loss::batch_loss_and_grad(&params, &batch, 1.0);
    let weights = analytic.weights.clone();
    let loss0 = naive_kge_loss(&params, &batch, &weights);
    let mut worst = rel_err(analytic.loss, loss0);

    let step = 1e-6;
    let mut p = params.clone();
    let mut ent = p.entity.clone();
    let num_e = central_diff(&mut ent, step, |x| {
        p.entity = x.to_vec();
        naive_kge_loss(&p, &batch, &weights)
    });
    p.entity = params.entity.clone();
    let mut rel = p.relation.clone();
    let num_r = central_diff(&mut rel, step, |x| {
        p.relation = x.to_vec();
        naive_kge_loss(&p, &batch, &weights)
    });
    for (a, n) in analytic
        .entity
        .iter()
        .zip(&num_e)
        .chain(analytic.relation.iter().zip(&num_r))
    {
        worst = worst.max(rel_err(*a, *n));
    }
    worst
}

/// Cross-entropy of the surrogate, recomputed with explicit loops.
pub fn naive_surrogate_loss(p: &SurrogateParams, ex: &SurrogateExample) -> f64 {
    let d_feat = ex.features.len();
    let mut u = vec![0.0; p.d_x];
    for (i, ui) in u.iter_mut().enumerate() {
        for j in 0..d_feat {
            *ui += p.w_p[i * d_feat + j] * ex.features[j];
        }
    }
    let logits: Vec<f64> = ex
        .candidates
        .iter()
        .map(|c| {
            let mut s = 0.0;
            for i in 0..p.d_x {
                let mut v = 0.0;
                for j in 0..p.d_s {
                    v += p.w_c[i * p.d_s + j] * c[j];
                }
                s += u[i] * v;
            }
            s
        })
        .collect();
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    z.ln() - logits[ex.target]
}

/// Worst relative error of the surrogate's analytic `W_p` / `W_c` gradient.
pub fn surrogate_gradcheck(seed: u64) -> f64 {
    let (d_s, d_x) = (4, 3);
    let params = SurrogateParams::init(d_s, d_x, seed);
    let mut g = rng(seed ^ 0x5eed);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let n_cand = 5;
        let ex = SurrogateExample {
            features: (0..3 * d_s).map(|_| g.gen_range(-1.0..1.0)).collect(),
            candidates: (0..n_cand)
                .map(|_| (0..d_s).map(|_| g.gen_range(-1.0..1.0)).collect())
                .collect(),
            target: g.gen_range(0..n_cand),
        };
        let (loss, grad) = ftg_core::adapter::example_grad(&params, &ex).unwrap();
        worst = worst.max(rel_err(loss, naive_surrogate_loss(&params, &ex)));
        let mut p = params.clone();
        let mut wp = p.w_p.clone();
        let num_p = central_diff(&mut wp, 1e-6, |x| {
            p.w_p = x.to_vec();
            naive_surrogate_loss(&p, &ex)
        });
        p.w_p = params.w_p.clone();
        let mut wc = p.w_c.clone();
        let num_c = central_diff(&mut wc, 1e-6, |x| {
            p.w_c = x.to_vec();
            naive_surrogate_loss(&p, &ex)
        });
        for (a, n) in grad
            .w_p
            .iter()
            .zip(&num_p)
            .chain(grad.w_c.iter().zip(&num_c))
        {
            worst = worst.max(rel_err(*a, *n));
        }
    }
    worst
}

fn all_triples(kg: &KnowledgeGraph) -> Vec<Triple> {
    kg.train()
        .iter()
        .chain(kg.valid())
        .chain(kg.test())
        .copied()
        .collect()
}

/// Every entity ordered by score (as f32, the library's precision), ties by
/// ascending id, with the other true answers removed. Returns the ordering
/// and the target's 1-based position.
pub fn naive_ranking(
    model: &EmbeddingModel,
    kg: &KnowledgeGraph,
    q: &Query,
) -> (Vec<EntityId>, usize) {
    let target = q.target.expect("query target");
    let triples = all_triples(kg);
    let mut scored: Vec<(EntityId, f32)> = Vec::new();
    for e in 0..kg.num_entities() {
        let t = match q.direction {
            Direction::Tail => Triple::new(q.anchor, q.relation, e),
            Direction::Head => Triple::new(e, q.relation, q.anchor),
        };
        if e != target && triples.contains(&t) {
            continue;
        }
        scored.push((e, naive_score(model, t.head, t.relation, t.tail) as f32));
    }
    // Selection sort: pick the best remaining each time.
    let mut order = Vec::new();
    while !scored.is_empty() {
        let mut best = 0;
        for i in 1..scored.len() {
            let (e, s) = scored[i];
            let (be, bs) = scored[best];
            if s > bs || (s == bs && e < be) {
                best = i;
            }
        }
        order.push(scored.remove(best).0);
    }
    let rank = order.iter().position(|&e| e == target).unwrap() + 1;
    (order, rank)
}

/// MRR, Hits@1, Hits@3, Hits@10 of a rank list.
pub fn naive_metrics(ranks: &[usize]) -> [f64; 4] {
    let n = ranks.len() as f64;
    let mut out = [0.0; 4];
    for &r in ranks {
        out[0] += 1.0 / r as f64;
        if r <= 1 {
            out[1] += 1.0;
        }
        if r <= 3 {
            out[2] += 1.0;
        }
        if r <= 10 {
            out[3] += 1.0;
        }
    }
    out.map(|v| v / n)
}

/// The query's incident train triples (self-loops once, the query triple
/// excluded) that pass the cosine threshold, best first.
pub fn naive_prune(
    model: &EmbeddingModel,
    kg: &KnowledgeGraph,
    q: &Query,
    epsilon: f64,
    binding: PruneBinding,
) -> Vec<(Triple, f64)> {
    let relvec = |r: RelationId| -> Vec<f64> {
        let raw = relation(model, r);
        match model.kind() {
            ModelKind::RotatE => raw
                .iter()
                .map(|p| p.cos())
                .chain(raw.iter().map(|p| p.sin()))
                .collect(),
            _ => raw,
        }
    };
    let cat = |e: EntityId, r: RelationId| {
        let mut v = entity(model, e);
        v.extend(relvec(r));
        v
    };
    let qv = cat(q.anchor, q.relation);
    let skip = q.triple();
    let mut seen = HashSet::new();
    let mut out: Vec<(Triple, EntityId, u8, f64)> = Vec::new();
    for &t in kg.train() {
        if t.head != q.anchor && t.tail != q.anchor {
            continue;
        }
        if Some(t) == skip || !seen.insert(t) {
            continue;
        }
        let (neighbor, dir) = if t.head == q.anchor {
            (t.tail, 0)
        } else {
            (t.head, 1)
        };
        let h = match binding {
            PruneBinding::Literal => t.head,
            PruneBinding::Center => q.anchor,
        };
        let v = cat(h, t.relation);
        let mut dot = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for i in 0..v.len() {
            dot += v[i] * qv[i];
            na += v[i] * v[i];
            nb += qv[i] * qv[i];
        }
        if na == 0.0 || nb == 0.0 {
            continue;
        }
        let sim = dot / (na.sqrt() * nb.sqrt());
        if sim > epsilon {
            out.push((t, neighbor, dir, sim));
        }
    }
    out.sort_by(|a, b| {
        b.3.total_cmp(&a.3)
            .then(a.0.relation.cmp(&b.0.relation))
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    out.into_iter().map(|(t, _, _, s)| (t, s)).collect()
}

/// All incident train triples (query triple excluded), by relation, reached
/// entity, head, tail.
pub fn naive_full_1hop(kg: &KnowledgeGraph, q: &Query) -> Vec<Triple> {
    let skip = q.triple();
    let mut v: Vec<Triple> = Vec::new();
    for &t in kg.train() {
        if (t.head == q.anchor || t.tail == q.anchor) && Some(t) != skip && !v.contains(&t) {
            v.push(t);
        }
    }
    let reached = |t: &Triple| if t.head == q.anchor { t.tail } else { t.head };
    v.sort_by_key(|t| (t.relation, reached(t), t.head, t.tail));
    v
}

/// `center, rel, entity, rel, ...` with entity names after their first
/// appearance omitted, cut before the first triple that overflows `budget`.
/// Returns the text and the entities it mentions (center included).
pub fn naive_serialize(
    kg: &KnowledgeGraph,
    center: EntityId,
    triples: &[Triple],
    budget: usize,
) -> (String, Vec<EntityId>) {
    let mut text: String = kg.entity_name(center).to_string();
    if text.chars().count() > budget {
        return (text.chars().take(budget).collect(), vec![center]);
    }
    let mut mentioned = vec![center];
    let mut ents = vec![center];
    for t in triples {
        let reached = if t.head == center { t.tail } else { t.head };
        let mut piece = format!(", {}", kg.relation_name(t.relation));
        let fresh = !mentioned.contains(&reached);
        if fresh {
            piece.push_str(&format!(", {}", kg.entity_name(reached)));
        }
        if text.chars().count() + piece.chars().count() > budget {
            break;
        }
        text.push_str(&piece);
        if fresh {
            mentioned.push(reached);
        }
        for e in [t.head, t.tail] {
            if !ents.contains(&e) {
                ents.push(e);
            }
        }
    }
    ents.sort_unstable();
    (text, ents)
}

/// Surrogate top-1-first reranking of one query, recomputed end to end.
/// Returns the merged rank of the target.
#[allow(clippy::too_many_arguments)]
pub fn naive_surrogate_rank(
    model: &EmbeddingModel,
    kg: &KnowledgeGraph,
    surrogate: &Surrogate,
    q: &Query,
    k: usize,
    epsilon: f64,
    budget: usize,
    n_return: usize,
) -> usize {
    let (order, _) = naive_ranking(model, kg, q);
    let cands: Vec<EntityId> = order.iter().take(k).copied().collect();
    let kept: Vec<Triple> = naive_prune(model, kg, q, epsilon, PruneBinding::Literal)
        .into_iter()
        .map(|(t, _)| t)
        .collect();
    let (_, ents) = naive_serialize(kg, q.anchor, &kept, budget);
    let d = model.dim();
    let mut pooled = vec![0.0; d];
    for &e in &ents {
        let v = entity(model, e);
        for i in 0..d {
            pooled[i] += v[i];
        }
    }
    // The sample carries the pooled vector as f32.
    let pooled: Vec<f64> = pooled
        .iter()
        .map(|p| f64::from((p / ents.len() as f64) as f32))
        .collect();
    let mut feats = entity(model, q.anchor);
    let raw = relation(model, q.relation);
    match model.kind() {
        ModelKind::RotatE => {
            feats.extend(raw.iter().map(|p| p.cos()));
            feats.extend(raw.iter().map(|p| p.sin()));
        }
        _ => feats.extend(raw),
    }
    feats.extend(pooled);
    let p = surrogate.params();
    let ex = SurrogateExample {
        features: feats,
        candidates: cands.iter().map(|&c| entity(model, c)).collect(),
        target: 0,
    };
    let d_feat = ex.features.len();
    let logits: Vec<f64> = ex
        .candidates
        .iter()
        .map(|c| {
            let mut s = 0.0;
            for i in 0..p.d_x {
                let mut u = 0.0;
                for j in 0..d_feat {
                    u += p.w_p[i * d_feat + j] * ex.features[j];
                }
                let mut v = 0.0;
                for j in 0..p.d_s {
                    v += p.w_c[i * p.d_s + j] * c[j];
                }
                s += u * v;
            }
            s
        })
        .collect();
    let mut idx: Vec<usize> = (0..cands.len()).collect();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    let mut merged: Vec<EntityId> = idx.iter().take(n_return).map(|&i| cands[i]).collect();
    for &e in &order {
        if !merged.contains(&e) {
            merged.push(e);
        }
    }
    merged.iter().position(|&e| Some(e) == q.target).unwrap() + 1
}

pub mod checks;
pub mod golden;
