//! Answer generators over instruction samples.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Once;
use std::time::Duration;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::adapter::Surrogate;
use crate::error::{Error, Result};
use crate::instruct::InstructionSample;
use crate::kge::EmbeddingModel;
use crate::seed;

pub trait Generator: Send + Sync {
    fn name(&self) -> String;

    /// At most `n_return` answer strings, best first.
    fn generate(&self, sample: &InstructionSample, n_return: usize) -> Result<Vec<String>>;

    /// Upper bound on concurrent calls; `None` means no limit.
    fn max_in_flight(&self) -> Option<usize> {
        None
    }
}

/// Emits the first candidate.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoTop1;

impl Generator for EchoTop1 {
    fn name(&self) -> String {
        "echo".into()
    }

    fn generate(&self, sample: &InstructionSample, n_return: usize) -> Result<Vec<String>> {
        Ok(sample
            .candidates
            .iter()
            .take(n_return.min(1))
            .cloned()
            .collect())
    }
}

/// Emits the answer with probability `p` when it is a candidate, otherwise a
/// uniformly drawn non-answer candidate.
#[derive(Debug, Clone, Copy)]
pub struct Oracle {
    pub p: f64,
    pub seed: u64,
}

impl Generator for Oracle {
    fn name(&self) -> String {
        format!("oracle:{}", self.p)
    }

    fn generate(&self, sample: &InstructionSample, n_return: usize) -> Result<Vec<String>> {
        if n_return == 0 || sample.candidates.is_empty() {
            return Ok(Vec::new());
        }
        let mut rng = seed::stage_rng(self.seed, &format!("oracle/{}", sample.id));
        let answer = sample.answer_index();
        if let Some(i) = answer {
            if rng.gen_bool(self.p.clamp(0.0, 1.0)) {
                return Ok(vec![sample.candidates[i].clone()]);
            }
        }
        let others: Vec<&String> = sample
            .candidates
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != answer)
            .map(|(_, c)| c)
            .collect();
        if others.is_empty() {
            return Ok(Vec::new());
        }
        Ok(vec![others[rng.gen_range(0..others.len())].clone()])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub id: String,
    pub outputs: Vec<String>,
}

/// Outputs recorded earlier, keyed by sample id. Unknown ids yield nothing.
#[derive(Debug, Clone, Default)]
pub struct Replay {
    outputs: HashMap<String, Vec<String>>,
}

impl Replay {
    pub fn from_records(records: impl IntoIterator<Item = ReplayRecord>) -> Self {
        Self {
            outputs: records.into_iter().map(|r| (r.id, r.outputs)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut records = Vec::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str::<ReplayRecord>(&line)?);
            }
        }
        Ok(Self::from_records(records))
    }
}

impl Generator for Replay {
    fn name(&self) -> String {
        "replay".into()
    }

    fn generate(&self, sample: &InstructionSample, n_return: usize) -> Result<Vec<String>> {
        Ok(self
            .outputs
            .get(&sample.id)
            .map(|v| v.iter().take(n_return).cloned().collect())
            .unwrap_or_default())
    }
}

pub const URL_ENV: &str = "FTG_LLM_URL";
pub const KEY_ENV: &str = "FTG_LLM_KEY";

/// Client for an OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone)]
pub struct HttpChat {
    pub url: String,
    pub key: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_in_flight: usize,
    agent: ureq::Agent,
}

static GRAPH_VEC_WARNING: Once = Once::new();

impl HttpChat {
    pub fn new(url: String, key: Option<String>, model: String, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            url,
            key,
            model,
            temperature: 0.0,
            max_in_flight: 4,
            agent,
        }
    }

    pub fn from_env(model: String) -> Result<Self> {
        let url = std::env::var(URL_ENV)
            .map_err(|_| Error::InvalidConfig(format!("{URL_ENV} is not set")))?;
        let key = std::env::var(KEY_ENV).ok();
        Ok(Self::new(url, key, model, Duration::from_secs(120)))
    }

    pub fn request_body(&self, sample: &InstructionSample, n_return: usize) -> serde_json::Value {
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": sample.render_prompt()}],
            "n": n_return,
            "temperature": self.temperature,
        })
    }
}

impl Generator for HttpChat {
    fn name(&self) -> String {
        "http".into()
    }

    fn max_in_flight(&self) -> Option<usize> {
        Some(self.max_in_flight.max(1))
    }

    fn generate(&self, sample: &InstructionSample, n_return: usize) -> Result<Vec<String>> {
        if sample.graph_vec.is_some() {
            GRAPH_VEC_WARNING
                .call_once(|| warn!("http generator ignores graph_vec (text-only protocol)"));
        }
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body: serde_json::Value = req
            .send_json(self.request_body(sample, n_return))
            .map_err(|e| Error::Transport(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let choices = body["choices"]
            .as_array()
            .ok_or_else(|| Error::Transport("response has no choices array".into()))?;
        Ok(choices
            .iter()
            .filter_map(|c| c["message"]["content"].as_str())
            .take(n_return)
            .map(str::to_string)
            .collect())
    }
}

/// Candidates ordered by surrogate logit (ties keep candidate order).
pub struct SurrogateGenerator<'a> {
    pub model: &'a EmbeddingModel,
    pub surrogate: Surrogate,
}

impl Generator for SurrogateGenerator<'_> {
    fn name(&self) -> String {
        "surrogate".into()
    }

    fn generate(&self, sample: &InstructionSample, n_return: usize) -> Result<Vec<String>> {
        let logits = self.surrogate.sample_logits(self.model, sample)?;
        let mut idx: Vec<usize> = (0..logits.len()).collect();
        idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
        Ok(idx
            .into_iter()
            .take(n_return)
            .map(|i| sample.candidates[i].clone())
            .collect())
    }
}

/// Generator selection as written on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum GeneratorSpec {
    Echo,
    Oracle(f64),
    Replay(PathBuf),
    Http,
    Surrogate,
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorSpec::Echo => f.write_str("echo"),
            GeneratorSpec::Oracle(p) => write!(f, "oracle:{p}"),
            GeneratorSpec::Replay(p) => write!(f, "replay:{}", p.display()),
            GeneratorSpec::Http => f.write_str("http"),
            GeneratorSpec::Surrogate => f.write_str("surrogate"),
        }
    }
}

impl FromStr for GeneratorSpec {
    type Err = Error;

    /// `echo`, `oracle[:p]`, `replay:PATH`, `http` or `surrogate`.
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::Unknown {
            what: "generator",
            name: s.to_string(),
        };
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        match (head, arg) {
            ("echo" | "echo_top1", None) => Ok(GeneratorSpec::Echo),
            ("oracle", None) => Ok(GeneratorSpec::Oracle(1.0)),
            ("oracle", Some(p)) => match p.parse::<f64>() {
                Ok(p) if (0.0..=1.0).contains(&p) => Ok(GeneratorSpec::Oracle(p)),
                _ => Err(Error::InvalidConfig(format!(
                    "oracle probability {p:?} not in [0, 1]"
                ))),
            },
            ("replay", Some(path)) if !path.is_empty() => Ok(GeneratorSpec::Replay(path.into())),
            ("http" | "http_chat", None) => Ok(GeneratorSpec::Http),
            ("surrogate", None) => Ok(GeneratorSpec::Surrogate),
            _ => Err(unknown()),
        }
    }
}

impl From<GeneratorSpec> for String {
    fn from(g: GeneratorSpec) -> String {
        g.to_string()
    }
}

impl TryFrom<String> for GeneratorSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruct::INSTRUCTION;
    use crate::kg::Direction;

    fn sample(answer: &str) -> InstructionSample {
        InstructionSample {
            id: "test-3-head".into(),
            direction: Direction::Head,
            anchor: 0,
            relation: 0,
            instruction: INSTRUCTION.into(),
            question: "q?".into(),
            context: None,
            candidates: vec!["a".into(), "b".into(), "c".into()],
            candidate_ids: vec![1, 2, 3],
            answer: answer.into(),
            forced_inclusion: false,
            graph_vec: None,
        }
    }

    #[test]
    fn echo_emits_first_candidate() {
        assert_eq!(EchoTop1.generate(&sample("b"), 10).unwrap(), vec!["a"]);
        assert!(EchoTop1.generate(&sample("b"), 0).unwrap().is_empty());
    }

    #[test]
    fn oracle_extremes() {
        let perfect = Oracle { p: 1.0, seed: 3 };
        assert_eq!(perfect.generate(&sample("c"), 10).unwrap(), vec!["c"]);
        let never = Oracle { p: 0.0, seed: 3 };
        for seed in 0..20 {
            let out = Oracle { seed, ..never }.generate(&sample("c"), 10).unwrap();
            assert_ne!(out, vec!["c"]);
        }
        // unrecalled target: some candidate, never empty
        assert_eq!(perfect.generate(&sample("zzz"), 10).unwrap().len(), 1);
        let a = Oracle { p: 0.5, seed: 9 };
        assert_eq!(
            a.generate(&sample("b"), 10).unwrap(),
            a.generate(&sample("b"), 10).unwrap()
        );
    }

    #[test]
    fn replay_truncates_and_tolerates_missing_ids() {
        let r = Replay::from_records([ReplayRecord {
            id: "test-3-head".into(),
            outputs: vec!["x".into(), "y".into(), "z".into()],
        }]);
        assert_eq!(r.generate(&sample(""), 2).unwrap(), vec!["x", "y"]);
        let mut other = sample("");
        other.id = "nope".into();
        assert!(r.generate(&other, 2).unwrap().is_empty());
    }

    #[test]
    fn spec_parsing() {
        assert_eq!(
            "echo".parse::<GeneratorSpec>().unwrap(),
            GeneratorSpec::Echo
        );
        assert_eq!(
            "oracle".parse::<GeneratorSpec>().unwrap(),
            GeneratorSpec::Oracle(1.0)
        );
        assert_eq!(
            "oracle:0.25".parse::<GeneratorSpec>().unwrap(),
            GeneratorSpec::Oracle(0.25)
        );
        assert_eq!(
            "replay:out/r.jsonl".parse::<GeneratorSpec>().unwrap(),
            GeneratorSpec::Replay("out/r.jsonl".into())
        );
        assert!(matches!(
            "gpt".parse::<GeneratorSpec>(),
            Err(Error::Unknown {
                what: "generator",
                ..
            })
        ));
        assert!("oracle:2".parse::<GeneratorSpec>().is_err());
        let s = GeneratorSpec::Oracle(0.5);
        assert_eq!(s.to_string().parse::<GeneratorSpec>().unwrap(), s);
    }
}
