use std::fs;
use std::path::{Path, PathBuf};

use ftg_core::adapter::SurrogateConfig;
use ftg_core::ego::{ContextConfig, Heuristic, PruneBinding};
use ftg_core::eval::{GeneratorSpec, PipelineConfig};
use ftg_core::instruct::SampleOptions;
use ftg_core::kg::{load_tsv, KnowledgeGraph, Split};
use ftg_core::kge::{ModelKind, TrainConfig};
use ftg_core::seed::sub_seed;
use ftg_core::synth::{neighborhood_kg, synthetic_kg, NeighborhoodSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Where the triples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Dataset {
    Synthetic {
        seed: u64,
        entities: usize,
        relations: usize,
        triples: usize,
    },
    Neighborhood(NeighborhoodSpec),
    /// A directory holding `train.txt`, `valid.txt` and `test.txt`.
    Tsv {
        dir: PathBuf,
    },
}

impl Default for Dataset {
    fn default() -> Self {
        Dataset::Synthetic {
            seed: 7,
            entities: 200,
            relations: 8,
            triples: 4000,
        }
    }
}

impl Dataset {
    pub fn load(&self) -> Result<KnowledgeGraph, CliError> {
        Ok(match self {
            Dataset::Synthetic {
                seed,
                entities,
                relations,
                triples,
            } => synthetic_kg(*seed, *entities, *relations, *triples)?,
            Dataset::Neighborhood(spec) => neighborhood_kg(spec)?,
            Dataset::Tsv { dir } => load_tsv(
                &dir.join("train.txt"),
                &dir.join("valid.txt"),
                &dir.join("test.txt"),
            )?,
        })
    }
}

/// Everything a run needs. Nested `seed` fields are overwritten with named
/// sub-seeds of the top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Dataset,
    pub filter: ModelKind,
    pub train: TrainConfig,
    pub k: usize,
    pub epsilon: f64,
    pub heuristic: String,
    pub budget_chars: usize,
    pub binding: PruneBinding,
    pub walk_steps: usize,
    pub two_hop_cap: usize,
    pub graph_vec: bool,
    pub include_context: bool,
    pub generator: String,
    pub n_return: usize,
    pub retries: usize,
    pub backoff_ms: u64,
    /// Model name sent by the `http` generator.
    pub http_model: String,
    pub surrogate: SurrogateConfig,
    /// Split whose queries become tuning samples (target forced into the candidates).
    pub tune_split: Split,
    pub eval_split: Split,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ctx = ContextConfig::default();
        Self {
            dataset: Dataset::default(),
            filter: ModelKind::RotatE,
            train: TrainConfig::default(),
            k: 20,
            epsilon: ctx.epsilon,
            heuristic: Heuristic::StructurePruned.as_str().into(),
            budget_chars: ctx.budget_chars,
            binding: ctx.binding,
            walk_steps: ctx.walk_steps,
            two_hop_cap: ctx.two_hop_cap,
            graph_vec: true,
            include_context: true,
            generator: "echo".into(),
            n_return: 10,
            retries: 3,
            backoff_ms: 250,
            http_model: "gpt-3.5-turbo".into(),
            surrogate: SurrogateConfig::default(),
            tune_split: Split::Valid,
            eval_split: Split::Test,
            out: PathBuf::from("ftg-out"),
            seed: 0,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub epsilon: Option<f64>,
    pub heuristic: Option<String>,
    pub generator: Option<String>,
    pub n_return: Option<usize>,
}

/// A validated configuration with its parsed names.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub heuristic: Heuristic,
    pub generator: GeneratorSpec,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(mut self, o: Overrides) -> Result<Resolved, CliError> {
        if let Some(v) = o.out {
            self.out = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.k {
            self.k = v;
        }
        if let Some(v) = o.epsilon {
            self.epsilon = v;
        }
        if let Some(v) = o.heuristic {
            self.heuristic = v;
        }
        if let Some(v) = o.generator {
            self.generator = v;
        }
        if let Some(v) = o.n_return {
            self.n_return = v;
        }
        self.train.seed = sub_seed(self.seed, "filter");
        self.surrogate.seed = sub_seed(self.seed, "surrogate");

        if self.k == 0 {
            return Err(CliError::Config("k must be at least 1".into()));
        }
        if self.n_return == 0 {
            return Err(CliError::Config("n_return must be at least 1".into()));
        }
        if !self.epsilon.is_finite() {
            return Err(CliError::Config("epsilon must be finite".into()));
        }
        self.train.validate()?;
        self.surrogate.validate()?;
        if let Dataset::Tsv { dir } = &self.dataset {
            if !dir.is_dir() {
                return Err(CliError::Config(format!(
                    "dataset directory {} not found",
                    dir.display()
                )));
            }
        }
        let heuristic = self.heuristic.parse()?;
        let generator = self.generator.parse()?;
        if let GeneratorSpec::Replay(p) = &generator {
            if !p.is_file() {
                return Err(CliError::Config(format!(
                    "replay file {} not found",
                    p.display()
                )));
            }
        }
        Ok(Resolved {
            config: self,
            heuristic,
            generator,
        })
    }
}

impl Resolved {
    pub fn context(&self) -> ContextConfig {
        let c = &self.config;
        ContextConfig {
            epsilon: c.epsilon,
            budget_chars: c.budget_chars,
            binding: c.binding,
            walk_steps: c.walk_steps,
            two_hop_cap: c.two_hop_cap,
            seed: sub_seed(c.seed, "context"),
        }
    }

    pub fn sample_options(&self) -> SampleOptions {
        SampleOptions {
            k: self.config.k,
            heuristic: self.heuristic,
            context: self.context(),
            graph_vec: self.config.graph_vec,
            include_context: self.config.include_context,
            shuffle_seed: None,
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            split: self.config.eval_split,
            sample: self.sample_options(),
            n_return: self.config.n_return,
            retries: self.config.retries,
            backoff_ms: self.config.backoff_ms,
        }
    }

    pub fn oracle_seed(&self) -> u64 {
        sub_seed(self.config.seed, "oracle")
    }
}
