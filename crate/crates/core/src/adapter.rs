//! Graph token pooling and the surrogate candidate reranker.
//!
//! The reranker scores candidate `c` for a query as
//! `<W_p [e_anchor ; r ; pooled], W_c e_c>` and is trained with softmax
//! cross-entropy over the candidate set. Filter embeddings are only read.

use std::fs;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::ego::SerializedContext;
use crate::error::{Error, Result};
use crate::instruct::InstructionSample;
use crate::kg::{EntityId, RelationId};
use crate::kge::EmbeddingModel;
use crate::seed;

/// Mean of the embeddings of the distinct entities in the context (center
/// included), accumulated in f64.
pub fn mean_pool(model: &EmbeddingModel, context: &SerializedContext) -> Vec<f64> {
    let entities = context.entities();
    let mut acc = vec![0.0; model.dim()];
    for &e in &entities {
        for (a, &v) in acc.iter_mut().zip(model.entity_row(e)) {
            *a += f64::from(v);
        }
    }
    let n = entities.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// `[e_anchor ; relation vector ; pooled]`.
pub fn features(
    model: &EmbeddingModel,
    anchor: EntityId,
    relation: RelationId,
    pooled: &[f64],
) -> Vec<f64> {
    let mut f: Vec<f64> = model
        .entity_row(anchor)
        .iter()
        .map(|&v| f64::from(v))
        .collect();
    f.extend(model.relation_vector(relation));
    f.extend_from_slice(pooled);
    f
}

fn matvec(m: &[f64], rows: usize, x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|i| {
            m[i * cols..(i + 1) * cols]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

/// Trainable weights in f64; `w_p` is `d_x × d_feat`, `w_c` is `d_x × d_s`,
/// both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateParams {
    pub d_s: usize,
    pub d_x: usize,
    pub w_p: Vec<f64>,
    pub w_c: Vec<f64>,
}

impl SurrogateParams {
    pub fn d_feat(&self) -> usize {
        3 * self.d_s
    }

    pub fn zeros(d_s: usize, d_x: usize) -> Self {
        Self {
            d_s,
            d_x,
            w_p: vec![0.0; d_x * 3 * d_s],
            w_c: vec![0.0; d_x * d_s],
        }
    }

    /// Entries uniform in `±1/sqrt(fan_in)`.
    pub fn init(d_s: usize, d_x: usize, seed: u64) -> Self {
        let mut rng = seed::stage_rng(seed, "surrogate/init");
        let mut fill = |n: usize, fan_in: usize| -> Vec<f64> {
            let b = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-b..=b)).collect()
        };
        let w_p = fill(d_x * 3 * d_s, 3 * d_s);
        let w_c = fill(d_x * d_s, d_s);
        Self { d_s, d_x, w_p, w_c }
    }

    /// `W_p · features`.
    pub fn project(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.d_feat() {
            return Err(Error::ShapeMismatch {
                expected: self.d_feat(),
                actual: features.len(),
            });
        }
        Ok(matvec(&self.w_p, self.d_x, features))
    }

    /// One logit per candidate embedding, in order.
    pub fn logits(&self, features: &[f64], candidates: &[Vec<f64>]) -> Result<Vec<f64>> {
        let u = self.project(features)?;
        candidates
            .iter()
            .map(|c| {
                if c.len() != self.d_s {
                    return Err(Error::ShapeMismatch {
                        expected: self.d_s,
                        actual: c.len(),
                    });
                }
                let v = matvec(&self.w_c, self.d_x, c);
                Ok(u.iter().zip(&v).map(|(a, b)| a * b).sum())
            })
            .collect()
    }
}

/// Features and candidate embeddings of one training query.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateExample {
    pub features: Vec<f64>,
    pub candidates: Vec<Vec<f64>>,
    pub target: usize,
}

impl SurrogateExample {
    /// From a sample carrying `graph_vec`; the answer must be a candidate.
    pub fn from_sample(model: &EmbeddingModel, sample: &InstructionSample) -> Result<Self> {
        let target = sample
            .answer_index()
            .ok_or_else(|| Error::TargetNotInCandidates(sample.id.clone()))?;
        let pooled = pooled_from_sample(model, sample)?;
        Ok(Self {
            features: features(model, sample.anchor, sample.relation, &pooled),
            candidates: candidate_embeddings(model, &sample.candidate_ids),
            target,
        })
    }
}

pub fn candidate_embeddings(model: &EmbeddingModel, ids: &[EntityId]) -> Vec<Vec<f64>> {
    ids.iter()
        .map(|&e| model.entity_row(e).iter().map(|&v| f64::from(v)).collect())
        .collect()
}

fn pooled_from_sample(model: &EmbeddingModel, sample: &InstructionSample) -> Result<Vec<f64>> {
    let v = sample
        .graph_vec
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig(format!("sample {} has no graph_vec", sample.id)))?;
    if v.len() != model.dim() {
        return Err(Error::ShapeMismatch {
            expected: model.dim(),
            actual: v.len(),
        });
    }
    Ok(v.iter().map(|&x| f64::from(x)).collect())
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Cross-entropy of one example.
pub fn example_loss(params: &SurrogateParams, ex: &SurrogateExample) -> Result<f64> {
    let logits = params.logits(&ex.features, &ex.candidates)?;
    Ok(-log_softmax(&logits)[ex.target])
}

/// Mean cross-entropy over a batch.
pub fn mean_loss(params: &SurrogateParams, batch: &[SurrogateExample]) -> Result<f64> {
    let total: f64 = batch
        .iter()
        .map(|ex| example_loss(params, ex))
        .sum::<Result<f64>>()?;
    Ok(total / batch.len().max(1) as f64)
}

/// Gradient of [`example_loss`] with respect to `w_p` and `w_c`.
pub fn example_grad(
    params: &SurrogateParams,
    ex: &SurrogateExample,
) -> Result<(f64, SurrogateParams)> {
    let (d_x, d_s, d_feat) = (params.d_x, params.d_s, params.d_feat());
    let u = params.project(&ex.features)?;
    let vs: Vec<Vec<f64>> = ex
        .candidates
        .iter()
        .map(|c| matvec(&params.w_c, d_x, c))
        .collect();
    let logits: Vec<f64> = vs
        .iter()
        .map(|v| u.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect();
    let logp = log_softmax(&logits);
    let loss = -logp[ex.target];
    let g: Vec<f64> = logp
        .iter()
        .enumerate()
        .map(|(i, lp)| lp.exp() - f64::from(u8::from(i == ex.target)))
        .collect();
    let mut grad = SurrogateParams::zeros(d_s, d_x);
    // dL/du = sum_i g_i v_i ; dL/dv_i = g_i u
    let mut du = vec![0.0; d_x];
    for (gi, v) in g.iter().zip(&vs) {
        for (a, b) in du.iter_mut().zip(v) {
            *a += gi * b;
        }
    }
    for (row, dr) in grad.w_p.chunks_exact_mut(d_feat).zip(&du) {
        for (w, f) in row.iter_mut().zip(&ex.features) {
            *w = dr * f;
        }
    }
    for (gi, c) in g.iter().zip(&ex.candidates) {
        for (row, ur) in grad.w_c.chunks_exact_mut(d_s).zip(&u) {
            let scale = gi * ur;
            for (w, x) in row.iter_mut().zip(c) {
                *w += scale * x;
            }
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub d_x: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Fraction of samples held out for the loss report.
    pub heldout_fraction: f64,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            d_x: 64,
            lr: 0.01,
            batch_size: 32,
            steps: 1500,
            heldout_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_x == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "d_x and batch_size must be positive".into(),
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidConfig("surrogate lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.heldout_fraction) {
            return Err(Error::InvalidConfig(
                "heldout_fraction must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    pub steps: usize,
    pub train_examples: usize,
    pub heldout_examples: usize,
    pub initial_heldout_loss: f64,
    pub final_heldout_loss: f64,
}

/// Trained reranker weights, stored as f32 like the filter embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub d_s: usize,
    pub d_x: usize,
    pub seed: u64,
    pub w_p: Vec<f32>,
    pub w_c: Vec<f32>,
}

impl Surrogate {
    pub fn from_params(p: &SurrogateParams, seed: u64) -> Self {
        Self {
            d_s: p.d_s,
            d_x: p.d_x,
            seed,
            w_p: p.w_p.iter().map(|&v| v as f32).collect(),
            w_c: p.w_c.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn params(&self) -> SurrogateParams {
        SurrogateParams {
            d_s: self.d_s,
            d_x: self.d_x,
            w_p: self.w_p.iter().map(|&v| f64::from(v)).collect(),
            w_c: self.w_c.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    /// Logits for the candidates of a sample with `graph_vec`.
    pub fn sample_logits(
        &self,
        model: &EmbeddingModel,
        sample: &InstructionSample,
    ) -> Result<Vec<f64>> {
        if model.dim() != self.d_s {
            return Err(Error::DimensionMismatch(format!(
                "surrogate expects d_s = {}, filter has {}",
                self.d_s,
                model.dim()
            )));
        }
        let pooled = pooled_from_sample(model, sample)?;
        let f = features(model, sample.anchor, sample.relation, &pooled);
        self.params()
            .logits(&f, &candidate_embeddings(model, &sample.candidate_ids))
    }
}

#[derive(Debug, Clone)]
pub struct TrainedSurrogate {
    pub surrogate: Surrogate,
    pub report: SurrogateReport,
}

/// Adam on the mean cross-entropy. The held-out part is drawn by a seeded
/// shuffle; updates use per-example gradients summed in example order.
pub fn train_surrogate(
    model: &EmbeddingModel,
    samples: &[InstructionSample],
    config: &SurrogateConfig,
) -> Result<TrainedSurrogate> {
    config.validate()?;
    let examples: Vec<SurrogateExample> = samples
        .par_iter()
        .map(|s| SurrogateExample::from_sample(model, s))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut seed::stage_rng(config.seed, "surrogate/split"));
    let n_held = ((examples.len() as f64) * config.heldout_fraction).round() as usize;
    let heldout: Vec<SurrogateExample> = order[..n_held]
        .iter()
        .map(|&i| examples[i].clone())
        .collect();
    let train: Vec<&SurrogateExample> = order[n_held..].iter().map(|&i| &examples[i]).collect();
    if train.is_empty() && config.steps > 0 {
        return Err(Error::InvalidConfig(
            "no surrogate training examples".into(),
        ));
    }

    let mut params = SurrogateParams::init(model.dim(), config.d_x, config.seed);
    let initial_heldout_loss = mean_loss(&params, &heldout)?;
    let mut adam = Adam::new(params.w_p.len() + params.w_c.len(), config.lr);
    let mut rng = seed::stage_rng(config.seed, "surrogate/sgd");
    for step in 0..config.steps {
        let batch: Vec<&SurrogateExample> = (0..config.batch_size)
            .map(|_| train[rng.gen_range(0..train.len())])
            .collect();
        let grads: Vec<(f64, SurrogateParams)> = batch
            .par_iter()
            .map(|ex| example_grad(&params, ex))
            .collect::<Result<_>>()?;
        let n = grads.len() as f64;
        let loss = grads.iter().map(|g| g.0).sum::<f64>() / n;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        let mut total = SurrogateParams::zeros(params.d_s, params.d_x);
        for (_, g) in &grads {
            for (a, b) in total.w_p.iter_mut().zip(&g.w_p) {
                *a += b / n;
            }
            for (a, b) in total.w_c.iter_mut().zip(&g.w_c) {
                *a += b / n;
            }
        }
        adam.step(&mut params, &total);
        if step % 100 == 0 {
            debug!("surrogate step {step}: loss {loss:.5}");
        }
    }
    let final_heldout_loss = mean_loss(&params, &heldout)?;
    info!("surrogate held-out loss {initial_heldout_loss:.4} -> {final_heldout_loss:.4}");
    let surrogate = Surrogate::from_params(&params, config.seed);
    if surrogate
        .w_p
        .iter()
        .chain(&surrogate.w_c)
        .any(|v| !v.is_finite())
    {
        return Err(Error::Diverged {
            step: config.steps,
            loss: f64::NAN,
        });
    }
    Ok(TrainedSurrogate {
        surrogate,
        report: SurrogateReport {
            steps: config.steps,
            train_examples: train.len(),
            heldout_examples: heldout.len(),
            initial_heldout_loss,
            final_heldout_loss,
        },
    })
}

struct Adam {
    lr: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step(&mut self, params: &mut SurrogateParams, grad: &SurrogateParams) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let ws = params.w_p.iter_mut().chain(params.w_c.iter_mut());
        let gs = grad.w_p.iter().chain(&grad.w_c);
        for (((w, g), m), v) in ws.zip(gs).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *w -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SurrogateMeta {
    kind: String,
    d_s: usize,
    d_x: usize,
    d_feat: usize,
    seed: u64,
}

pub const SURROGATE_KIND: &str = "surrogate";

pub fn encode_surrogate(s: &Surrogate) -> Result<Vec<u8>> {
    let meta = SurrogateMeta {
        kind: SURROGATE_KIND.to_string(),
        d_s: s.d_s,
        d_x: s.d_x,
        d_feat: 3 * s.d_s,
        seed: s.seed,
    };
    checkpoint::encode(&meta, &[&s.w_p, &s.w_c])
}

pub fn decode_surrogate(bytes: &[u8]) -> Result<Surrogate> {
    let (meta_bytes, payload) = checkpoint::decode_header(bytes)?;
    let meta: SurrogateMeta =
        serde_json::from_slice(meta_bytes).map_err(|e| Error::Metadata(e.to_string()))?;
    if meta.kind != SURROGATE_KIND {
        return Err(Error::Metadata(format!(
            "not a surrogate checkpoint (kind {:?})",
            meta.kind
        )));
    }
    if meta.d_feat != 3 * meta.d_s || meta.d_s == 0 || meta.d_x == 0 {
        return Err(Error::DimensionMismatch(format!(
            "d_s = {}, d_x = {}, d_feat = {}",
            meta.d_s, meta.d_x, meta.d_feat
        )));
    }
    let sizes = [meta.d_x * meta.d_feat, meta.d_x * meta.d_s];
    let mut sections = checkpoint::decode_sections(payload, 12 + meta_bytes.len(), &sizes)?;
    let w_c = sections.pop().unwrap_or_default();
    let w_p = sections.pop().unwrap_or_default();
    Ok(Surrogate {
        d_s: meta.d_s,
        d_x: meta.d_x,
        seed: meta.seed,
        w_p,
        w_c,
    })
}

pub fn save_surrogate(s: &Surrogate, path: &Path) -> Result<()> {
    fs::write(path, encode_surrogate(s)?)?;
    Ok(())
}

pub fn load_surrogate(path: &Path) -> Result<Surrogate> {
    decode_surrogate(&fs::read(path)?)
}
