use log::{debug, info};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{batch_loss, example_grad, Example, ExampleGrad};
use super::model::{EmbeddingModel, ModelKind};
use crate::error::{Error, Result};
use crate::filter;
use crate::kg::{Direction, KnowledgeGraph, Split};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub negatives: usize,
    pub adversarial_temperature: f64,
    pub gamma: f32,
    pub steps: usize,
    pub seed: u64,
    /// Validation MRR is logged every `eval_every` steps; 0 disables it.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            lr: 1.0,
            batch_size: 128,
            negatives: 32,
            adversarial_temperature: 1.0,
            gamma: 6.0,
            steps: 2000,
            seed: 0,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if self.batch_size == 0 || self.negatives == 0 {
            return bad("batch_size and negatives must be positive");
        }
        if !(self.adversarial_temperature.is_finite() && self.adversarial_temperature >= 0.0) {
            return bad("adversarial_temperature must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    /// Loss on a fixed held-out mini-batch before the first update.
    pub initial_heldout_loss: f64,
    /// Same mini-batch after the last update.
    pub final_heldout_loss: f64,
    /// `(step, mean batch loss)` sampled every 100 steps.
    pub history: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: EmbeddingModel,
    pub report: TrainReport,
}

fn sample_example(kg: &KnowledgeGraph, negatives: usize, rng: &mut ChaCha8Rng) -> Example {
    let train = kg.train();
    let positive = train[rng.gen_range(0..train.len())];
    let corrupt = if rng.gen_bool(0.5) {
        Direction::Tail
    } else {
        Direction::Head
    };
    let n = kg.num_entities();
    Example {
        positive,
        corrupt,
        negatives: (0..negatives).map(|_| rng.gen_range(0..n)).collect(),
    }
}

/// Trains a filter model with plain SGD on the self-adversarial loss.
/// Deterministic for a fixed seed: examples are drawn sequentially, gradients
/// may be computed in parallel, and updates are applied in example order.
pub fn train(kg: &KnowledgeGraph, config: &TrainConfig, kind: ModelKind) -> Result<TrainedModel> {
    config.validate()?;
    if kg.train().is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    let mut model = EmbeddingModel::init(
        kind,
        kg.num_entities(),
        kg.num_relations(),
        config.dim,
        config.gamma,
        config.seed,
    )?;
    let alpha = config.adversarial_temperature;

    let mut heldout_rng = seed::stage_rng(config.seed, "kge/heldout");
    let heldout: Vec<Example> = (0..config.batch_size.min(256))
        .map(|_| sample_example(kg, config.negatives, &mut heldout_rng))
        .collect();
    let initial_heldout_loss = batch_loss(&model, &heldout, alpha, None);

    let mut rng = seed::stage_rng(config.seed, "kge/sgd");
    let mut history = Vec::new();
    let dim = model.dim;
    let rel_width = model.relation_width();
    for step in 0..config.steps {
        let batch: Vec<Example> = (0..config.batch_size)
            .map(|_| sample_example(kg, config.negatives, &mut rng))
            .collect();
        let grads: Vec<ExampleGrad> = batch
            .par_iter()
            .map(|ex| example_grad(&model, ex, alpha, None))
            .collect();
        let loss = grads.iter().map(|g| g.loss).sum::<f64>() / batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        let scale = config.lr / batch.len() as f64;
        for g in &grads {
            for (e, grad) in &g.entity {
                let row = &mut model.entity[e * dim..(e + 1) * dim];
                for (p, v) in row.iter_mut().zip(grad) {
                    *p = (f64::from(*p) - scale * v) as f32;
                }
            }
            for (r, grad) in &g.relation {
                let row = &mut model.relation[r * rel_width..(r + 1) * rel_width];
                for (p, v) in row.iter_mut().zip(grad) {
                    *p = (f64::from(*p) - scale * v) as f32;
                }
            }
        }
        if step % 100 == 0 {
            history.push((step, loss));
            debug!("step {step}: loss {loss:.5}");
        }
        if config.eval_every > 0 && (step + 1) % config.eval_every == 0 && !kg.valid().is_empty() {
            let metrics = filter::filter_metrics(&model, kg, Split::Valid)?;
            info!(
                "step {}: valid MRR {:.4} Hits@10 {:.4}",
                step + 1,
                metrics.combined.mrr,
                metrics.combined.hits10
            );
        }
    }
    if !model.all_finite() {
        return Err(Error::Diverged {
            step: config.steps,
            loss: f64::NAN,
        });
    }
    let final_heldout_loss = batch_loss(&model, &heldout, alpha, None);
    Ok(TrainedModel {
        model,
        report: TrainReport {
            steps: config.steps,
            initial_heldout_loss,
            final_heldout_loss,
            history,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synthetic_kg;

    #[test]
    fn zero_steps_returns_initialization() {
        let kg = synthetic_kg(3, 30, 2, 120).unwrap();
        let cfg = TrainConfig {
            dim: 8,
            steps: 0,
            seed: 4,
            ..TrainConfig::default()
        };
        let trained = train(&kg, &cfg, ModelKind::RotatE).unwrap();
        let init = EmbeddingModel::init(ModelKind::RotatE, 30, 2, 8, cfg.gamma, 4).unwrap();
        assert_eq!(trained.model, init);
    }

    #[test]
    fn training_is_deterministic_and_lowers_heldout_loss() {
        let kg = synthetic_kg(3, 30, 2, 120).unwrap();
        let cfg = TrainConfig {
            dim: 8,
            steps: 200,
            batch_size: 32,
            negatives: 8,
            seed: 4,
            ..TrainConfig::default()
        };
        for kind in ModelKind::ALL {
            let a = train(&kg, &cfg, kind).unwrap();
            let b = train(&kg, &cfg, kind).unwrap();
            assert_eq!(a.model, b.model, "{kind}");
            assert!(
                a.report.final_heldout_loss < a.report.initial_heldout_loss,
                "{kind}: {:?}",
                a.report
            );
        }
    }

    #[test]
    fn divergence_names_the_step() {
        let kg = synthetic_kg(3, 30, 2, 120).unwrap();
        let cfg = TrainConfig {
            dim: 8,
            steps: 500,
            lr: 1e30,
            seed: 1,
            ..TrainConfig::default()
        };
        match train(&kg, &cfg, ModelKind::DistMult) {
            Err(Error::Diverged { step, .. }) => assert!(step <= 500),
            other => panic!("expected divergence, got {:?}", other.map(|t| t.report)),
        }
    }
}
