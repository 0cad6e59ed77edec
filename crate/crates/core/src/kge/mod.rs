//! Structure-based filter models: TransE, DistMult, ComplEx and RotatE.

pub mod loss;
pub mod model;
pub mod train;

pub use loss::{DenseParams, Example};
pub use model::{score_f64, EmbeddingModel, ModelKind};
pub use train::{train, TrainConfig, TrainReport, TrainedModel};
