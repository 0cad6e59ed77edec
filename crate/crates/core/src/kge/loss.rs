//! Self-adversarial negative-sampling loss and its analytic gradient.
//!
//! For a positive triple with logit `s` and negatives with logits `s_i`:
//!
//! ```text
//! L = -log σ(s) - Σ_i p_i log σ(-s_i),   p = softmax(α · s_neg)
//! ```
//!
//! The weights `p` are treated as constants when differentiating (stop
//! gradient), so gradient checks hold them fixed at the evaluation point.

use serde::{Deserialize, Serialize};

use super::model::{logit_and_grad, EmbeddingModel, ModelKind};
use crate::kg::{Direction, EntityId, Triple};

/// One positive triple and its corruptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub positive: Triple,
    /// Which side the negatives replace.
    pub corrupt: Direction,
    pub negatives: Vec<EntityId>,
}

impl Example {
    pub fn negative_triple(&self, i: usize) -> Triple {
        let mut t = self.positive;
        match self.corrupt {
            Direction::Tail => t.tail = self.negatives[i],
            Direction::Head => t.head = self.negatives[i],
        }
        t
    }
}

/// Read access to parameter rows in 64-bit precision.
pub trait ParamSource {
    fn kind(&self) -> ModelKind;
    fn gamma(&self) -> f64;
    fn entity_f64(&self, e: EntityId) -> Vec<f64>;
    fn relation_f64(&self, r: usize) -> Vec<f64>;
}

impl ParamSource for EmbeddingModel {
    fn kind(&self) -> ModelKind {
        self.kind
    }

    fn gamma(&self) -> f64 {
        f64::from(self.gamma)
    }

    fn entity_f64(&self, e: EntityId) -> Vec<f64> {
        self.entity_row(e).iter().map(|&v| f64::from(v)).collect()
    }

    fn relation_f64(&self, r: usize) -> Vec<f64> {
        self.relation_row(r).iter().map(|&v| f64::from(v)).collect()
    }
}

/// A 64-bit copy of a model's parameters, used for gradient checking.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub kind: ModelKind,
    pub gamma: f64,
    pub dim: usize,
    pub entity: Vec<f64>,
    pub relation: Vec<f64>,
}

impl DenseParams {
    pub fn from_model(m: &EmbeddingModel) -> Self {
        Self {
            kind: m.kind,
            gamma: f64::from(m.gamma),
            dim: m.dim,
            entity: m.entity.iter().map(|&v| f64::from(v)).collect(),
            relation: m.relation.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    pub fn relation_width(&self) -> usize {
        self.kind.relation_width(self.dim)
    }
}

impl ParamSource for DenseParams {
    fn kind(&self) -> ModelKind {
        self.kind
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn entity_f64(&self, e: EntityId) -> Vec<f64> {
        self.entity[e * self.dim..(e + 1) * self.dim].to_vec()
    }

    fn relation_f64(&self, r: usize) -> Vec<f64> {
        let w = self.relation_width();
        self.relation[r * w..(r + 1) * w].to_vec()
    }
}

/// Loss of one example with sparse gradient contributions.
#[derive(Debug, Clone)]
pub struct ExampleGrad {
    pub loss: f64,
    pub weights: Vec<f64>,
    pub entity: Vec<(EntityId, Vec<f64>)>,
    pub relation: Vec<(usize, Vec<f64>)>,
}

pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax of `alpha * logits`; uniform when `alpha == 0`.
pub fn adversarial_weights(logits: &[f64], alpha: f64) -> Vec<f64> {
    if logits.is_empty() {
        return Vec::new();
    }
    let scaled: Vec<f64> = logits.iter().map(|s| alpha * s).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Loss and gradient of one example. `fixed_weights` overrides the
/// adversarial softmax (used to differentiate with the weights frozen).
pub fn example_grad<P: ParamSource>(
    params: &P,
    ex: &Example,
    alpha: f64,
    fixed_weights: Option<&[f64]>,
) -> ExampleGrad {
    let kind = params.kind();
    let gamma = params.gamma();
    let p = ex.positive;
    let h = params.entity_f64(p.head);
    let r = params.relation_f64(p.relation);
    let t = params.entity_f64(p.tail);

    let mut entity = Vec::with_capacity(2 + ex.negatives.len());
    let mut relation = Vec::with_capacity(1);

    let (s_pos, gh, gr, gt) = logit_and_grad(kind, gamma, &h, &r, &t);
    let mut loss = -log_sigmoid(s_pos);
    let c_pos = sigmoid(s_pos) - 1.0;
    let mut g_head: Vec<f64> = gh.iter().map(|g| c_pos * g).collect();
    let mut g_tail: Vec<f64> = gt.iter().map(|g| c_pos * g).collect();
    let mut g_rel: Vec<f64> = gr.iter().map(|g| c_pos * g).collect();

    let neg_rows: Vec<Vec<f64>> = ex.negatives.iter().map(|&e| params.entity_f64(e)).collect();
    let neg_parts: Vec<_> = neg_rows
        .iter()
        .map(|row| match ex.corrupt {
            Direction::Tail => logit_and_grad(kind, gamma, &h, &r, row),
            Direction::Head => logit_and_grad(kind, gamma, row, &r, &t),
        })
        .collect();
    let logits: Vec<f64> = neg_parts.iter().map(|x| x.0).collect();
    let weights = match fixed_weights {
        Some(w) => w.to_vec(),
        None => adversarial_weights(&logits, alpha),
    };
    for (i, (s, ngh, ngr, ngt)) in neg_parts.into_iter().enumerate() {
        loss -= weights[i] * log_sigmoid(-s);
        let c = weights[i] * sigmoid(s);
        for (acc, g) in g_rel.iter_mut().zip(&ngr) {
            *acc += c * g;
        }
        match ex.corrupt {
            Direction::Tail => {
                for (acc, g) in g_head.iter_mut().zip(&ngh) {
                    *acc += c * g;
                }
                entity.push((ex.negatives[i], ngt.iter().map(|g| c * g).collect()));
            }
            Direction::Head => {
                for (acc, g) in g_tail.iter_mut().zip(&ngt) {
                    *acc += c * g;
                }
                entity.push((ex.negatives[i], ngh.iter().map(|g| c * g).collect()));
            }
        }
    }
    entity.push((p.head, g_head));
    entity.push((p.tail, g_tail));
    relation.push((p.relation, g_rel));
    ExampleGrad {
        loss,
        weights,
        entity,
        relation,
    }
}

/// Mean loss over a batch (no gradient).
pub fn batch_loss<P: ParamSource>(
    params: &P,
    batch: &[Example],
    alpha: f64,
    fixed_weights: Option<&[Vec<f64>]>,
) -> f64 {
    let total: f64 = batch
        .iter()
        .enumerate()
        .map(|(i, ex)| example_grad(params, ex, alpha, fixed_weights.map(|w| w[i].as_slice())).loss)
        .sum();
    total / batch.len() as f64
}

/// Dense mean-loss gradient, for small models.
#[derive(Debug, Clone)]
pub struct DenseGrad {
    pub loss: f64,
    pub entity: Vec<f64>,
    pub relation: Vec<f64>,
    /// Adversarial weights used per example.
    pub weights: Vec<Vec<f64>>,
}

pub fn batch_loss_and_grad(params: &DenseParams, batch: &[Example], alpha: f64) -> DenseGrad {
    let n = batch.len() as f64;
    let mut out = DenseGrad {
        loss: 0.0,
        entity: vec![0.0; params.entity.len()],
        relation: vec![0.0; params.relation.len()],
        weights: Vec::with_capacity(batch.len()),
    };
    let d = params.dim;
    let w = params.relation_width();
    for ex in batch {
        let g = example_grad(params, ex, alpha, None);
        out.loss += g.loss / n;
        for (e, grad) in &g.entity {
            for (k, v) in grad.iter().enumerate() {
                out.entity[e * d + k] += v / n;
            }
        }
        for (r, grad) in &g.relation {
            for (k, v) in grad.iter().enumerate() {
                out.relation[r * w + k] += v / n;
            }
        }
        out.weights.push(g.weights);
    }
    out
}
