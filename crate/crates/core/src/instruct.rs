//! Multiple-choice instruction samples and their JSONL form.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::mean_pool;
use crate::ego::{context_heuristic, ContextConfig, Heuristic, SerializedContext};
use crate::error::{Error, Result};
use crate::filter::{
    candidates_from_ranking, rank_filtered, CandidateMode, CandidateSet, FilteredRanking, Query,
};
use crate::kg::{Direction, EntityId, KnowledgeGraph, RelationId, Split};
use crate::kge::EmbeddingModel;
use crate::seed;

pub const INSTRUCTION: &str = "Please answer the following question and select only one answer from the candidates that is most relevant to the question.";

pub const HEAD_PREFIX: &str = "What/Who/When/Where/Why";

/// Natural-language question for a query.
pub fn verbalize(kg: &KnowledgeGraph, query: &Query) -> Result<String> {
    kg.check_entity(query.anchor)?;
    kg.check_relation(query.relation)?;
    let anchor = kg.entity_name(query.anchor);
    let rel = kg.relation_name(query.relation);
    let s = match query.direction {
        Direction::Tail => format!("{anchor}, {rel}?"),
        Direction::Head => format!("{HEAD_PREFIX} {rel} {anchor}?"),
    };
    Ok(s.trim_end().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionSample {
    pub id: String,
    pub direction: Direction,
    pub anchor: EntityId,
    pub relation: RelationId,
    pub instruction: String,
    pub question: String,
    pub context: Option<String>,
    /// Display names; repeated names carry a " (n)" suffix.
    pub candidates: Vec<String>,
    pub candidate_ids: Vec<EntityId>,
    pub answer: String,
    pub forced_inclusion: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_vec: Option<Vec<f32>>,
}

impl InstructionSample {
    /// Position of the answer among the candidates.
    pub fn answer_index(&self) -> Option<usize> {
        if self.answer.is_empty() {
            return None;
        }
        self.candidates.iter().position(|c| *c == self.answer)
    }

    /// Prompt text in template order; the context line is omitted when absent.
    pub fn render(&self) -> String {
        let mut lines = vec![
            format!("Instruction: {}", self.instruction),
            format!("Question: {}", self.question),
        ];
        if let Some(ctx) = &self.context {
            lines.push(format!("Context: {ctx}"));
        }
        lines.push(format!("Candidates: {}", self.candidates.join(", ")));
        lines.push(format!("Answer: {}", self.answer));
        lines
            .iter()
            .map(|l| l.trim_end())
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Prompt without the answer, as sent to a generator.
    pub fn render_prompt(&self) -> String {
        Self {
            answer: String::new(),
            ..self.clone()
        }
        .render()
    }

    /// Reorders candidates and ids together.
    pub fn shuffle_candidates(&mut self, seed: u64) {
        let mut rng = seed::stage_rng(seed, &format!("instruct/shuffle/{}", self.id));
        let mut pairs: Vec<(String, EntityId)> = self
            .candidates
            .drain(..)
            .zip(self.candidate_ids.drain(..))
            .collect();
        pairs.shuffle(&mut rng);
        (self.candidates, self.candidate_ids) = pairs.into_iter().unzip();
    }
}

/// Names for display, suffixing repeats with " (2)", " (3)", ...
pub fn display_names(kg: &KnowledgeGraph, ids: &[EntityId]) -> Vec<String> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    ids.iter()
        .map(|&e| {
            let name = kg.entity_name(e);
            let n = seen.entry(name).or_insert(0);
            *n += 1;
            if *n == 1 {
                name.to_string()
            } else {
                format!("{name} ({n})")
            }
        })
        .collect()
}

pub fn build_sample(
    kg: &KnowledgeGraph,
    cset: &CandidateSet,
    context: Option<&SerializedContext>,
    graph_vec: Option<Vec<f32>>,
    mode: CandidateMode,
) -> Result<InstructionSample> {
    let q = &cset.query;
    let ids = cset.ids();
    let names = display_names(kg, &ids);
    let answer = match q.target {
        Some(t) => match ids.iter().position(|&c| c == t) {
            Some(i) => names[i].clone(),
            None if mode == CandidateMode::Train => {
                return Err(Error::TargetNotInCandidates(q.id.clone()));
            }
            None => kg.entity_name(t).to_string(),
        },
        None => String::new(),
    };
    Ok(InstructionSample {
        id: q.id.clone(),
        direction: q.direction,
        anchor: q.anchor,
        relation: q.relation,
        instruction: INSTRUCTION.to_string(),
        question: verbalize(kg, q)?,
        context: context.filter(|c| !c.is_empty()).map(|c| c.text.clone()),
        candidates: names,
        candidate_ids: ids,
        answer,
        forced_inclusion: cset.forced_inclusion,
        graph_vec,
    })
}

/// Everything derived from one query on the way to a sample.
#[derive(Debug, Clone)]
pub struct PreparedQuery {
    pub ranking: FilteredRanking,
    pub candidates: CandidateSet,
    pub context: SerializedContext,
    pub sample: InstructionSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleOptions {
    pub k: usize,
    pub heuristic: Heuristic,
    pub context: ContextConfig,
    /// Attach the pooled structural vector to each sample.
    pub graph_vec: bool,
    /// Put the context section in prompts.
    pub include_context: bool,
    /// Seed for shuffling candidate order; filter order when absent.
    pub shuffle_seed: Option<u64>,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            k: 20,
            heuristic: Heuristic::StructurePruned,
            context: ContextConfig::default(),
            graph_vec: true,
            include_context: true,
            shuffle_seed: None,
        }
    }
}

pub fn prepare_query(
    kg: &KnowledgeGraph,
    model: &EmbeddingModel,
    query: &Query,
    mode: CandidateMode,
    opts: &SampleOptions,
) -> Result<PreparedQuery> {
    if opts.k == 0 || opts.k > kg.num_entities() {
        return Err(Error::KOutOfRange {
            k: opts.k,
            max: kg.num_entities(),
        });
    }
    let ranking = rank_filtered(model, kg, query)?;
    let candidates = candidates_from_ranking(query, &ranking, opts.k, mode);
    let context = context_heuristic(kg, model, query, opts.heuristic, &opts.context)?;
    let graph_vec = opts.graph_vec.then(|| {
        mean_pool(model, &context)
            .into_iter()
            .map(|v| v as f32)
            .collect()
    });
    let shown = opts.include_context.then_some(&context);
    let mut sample = build_sample(kg, &candidates, shown, graph_vec, mode)?;
    if let Some(s) = opts.shuffle_seed {
        sample.shuffle_candidates(s);
    }
    Ok(PreparedQuery {
        ranking,
        candidates,
        context,
        sample,
    })
}

/// Samples for both directions of every triple in a split, in query order.
pub fn build_split_samples(
    kg: &KnowledgeGraph,
    model: &EmbeddingModel,
    split: Split,
    mode: CandidateMode,
    opts: &SampleOptions,
) -> Result<Vec<InstructionSample>> {
    crate::filter::split_queries(kg, split)
        .par_iter()
        .map(|q| prepare_query(kg, model, q, mode, opts).map(|p| p.sample))
        .collect()
}

/// Shortest decimal of the value rounded to 9 significant digits.
pub fn format_sig9(v: f32) -> String {
    if !v.is_finite() {
        return "null".to_string();
    }
    let rounded: f64 = format!("{:.8e}", v).parse().unwrap_or(0.0);
    let s = format!("{rounded}");
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

/// One JSON object without a trailing newline.
pub fn sample_to_json(sample: &InstructionSample, include_graph_vec: bool) -> Result<String> {
    let mut s = serde_json::to_string(&InstructionSample {
        graph_vec: None,
        ..sample.clone()
    })?;
    if let (true, Some(v)) = (include_graph_vec, &sample.graph_vec) {
        s.pop();
        s.push_str(",\"graph_vec\":[");
        let parts: Vec<String> = v.iter().map(|&x| format_sig9(x)).collect();
        s.push_str(&parts.join(","));
        s.push_str("]}");
    }
    Ok(s)
}

pub fn write_jsonl<W: Write>(
    samples: &[InstructionSample],
    mut w: W,
    include_graph_vec: bool,
) -> Result<()> {
    for s in samples {
        writeln!(w, "{}", sample_to_json(s, include_graph_vec)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_jsonl(
    samples: &[InstructionSample],
    path: &Path,
    include_graph_vec: bool,
) -> Result<()> {
    write_jsonl(
        samples,
        BufWriter::new(File::create(path)?),
        include_graph_vec,
    )
}

pub fn read_jsonl(path: &Path) -> Result<Vec<InstructionSample>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::LabeledTriple;

    fn lab(rows: &[(&str, &str, &str)]) -> Vec<LabeledTriple> {
        rows.iter()
            .map(|(h, r, t)| (h.to_string(), r.to_string(), t.to_string()))
            .collect()
    }

    const REL: &str =
        "military/military conflict/combatants./military/military combatant group/combatants";

    #[test]
    fn verbalization_templates() {
        let kg = KnowledgeGraph::from_labeled(
            &lab(&[("War on Terrorism", REL, "Canada"), ("a", "r", "b")]),
            &[],
            &[],
        )
        .unwrap();
        let t = kg.train()[0];
        let tail = Query::from_triple(Split::Train, 0, t, Direction::Tail);
        let head = Query::from_triple(Split::Train, 0, t, Direction::Head);
        assert_eq!(
            verbalize(&kg, &tail).unwrap(),
            format!("War on Terrorism, {REL}?")
        );
        assert_eq!(
            verbalize(&kg, &head).unwrap(),
            format!("What/Who/When/Where/Why {REL} Canada?")
        );
        let small = Query::from_triple(Split::Train, 1, kg.train()[1], Direction::Tail);
        assert_eq!(verbalize(&kg, &small).unwrap(), "a, r?");
    }

    fn sample() -> InstructionSample {
        InstructionSample {
            id: "test-0-tail".into(),
            direction: Direction::Tail,
            anchor: 0,
            relation: 0,
            instruction: INSTRUCTION.into(),
            question: "Friedrich Gundolf, employer?".into(),
            context: None,
            candidates: vec!["Heidelberg University".into(), "Max Weber".into()],
            candidate_ids: vec![1, 2],
            answer: "Heidelberg University".into(),
            forced_inclusion: false,
            graph_vec: Some(vec![0.1, -2.5, 3.0]),
        }
    }

    #[test]
    fn render_without_context_has_four_sections() {
        let s = sample();
        let text = s.render();
        assert!(!text.contains("Context:"));
        assert_eq!(text.lines().count(), 4);
        assert!(text.ends_with("Answer: Heidelberg University"));
        assert!(s.render_prompt().ends_with("Answer:"));
    }

    #[test]
    fn duplicate_names_get_suffixes() {
        let kg = KnowledgeGraph::from_labeled(&lab(&[("x", "r", "y")]), &[], &[]).unwrap();
        let names = display_names(&kg, &[0, 1, 0, 0]);
        assert_eq!(names, vec!["x", "y", "x (2)", "x (3)"]);
    }

    #[test]
    fn train_sample_without_target_is_an_error() {
        let kg = KnowledgeGraph::from_labeled(&lab(&[("a", "r", "b"), ("c", "r", "d")]), &[], &[])
            .unwrap();
        let q = Query::from_triple(Split::Train, 0, kg.train()[0], Direction::Tail);
        let cset = CandidateSet {
            query: q,
            candidates: vec![(3, 1.0)],
            k: 1,
            target_in_topk: false,
            raw_target_rank: Some(2),
            forced_inclusion: false,
        };
        assert!(matches!(
            build_sample(&kg, &cset, None, None, CandidateMode::Train),
            Err(Error::TargetNotInCandidates(_))
        ));
        let eval = build_sample(&kg, &cset, None, None, CandidateMode::Eval).unwrap();
        assert_eq!(eval.answer, "b");
        assert_eq!(eval.answer_index(), None);
    }

    #[test]
    fn jsonl_round_trip_and_key_order() {
        let s = sample();
        let line = sample_to_json(&s, true).unwrap();
        let keys: Vec<String> = serde_json::from_str::<serde_json::Value>(&line)
            .unwrap()
            .as_object()
            .unwrap()
            .keys()
            .cloned()
            .collect();
        assert_eq!(keys.len(), 12);
        assert!(line.starts_with("{\"id\":"));
        assert!(line.ends_with(",\"graph_vec\":[0.100000001,-2.5,3]}"));
        let back: InstructionSample = serde_json::from_str(&line).unwrap();
        assert_eq!(back, s);
        let without = sample_to_json(&s, false).unwrap();
        assert!(!without.contains("graph_vec"));
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.1), "0.100000001");
        assert_eq!(format_sig9(-2.5), "-2.5");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333343");
        assert_eq!(format_sig9(-0.0), "0");
        assert_eq!(format_sig9(123456789.0), "123456792");
        let v = 0.123_456_79_f32;
        assert_eq!(format_sig9(v).parse::<f32>().unwrap(), v);
    }

    #[test]
    fn empty_list_writes_nothing() {
        let mut buf = Vec::new();
        write_jsonl(&[], &mut buf, true).unwrap();
        assert!(buf.is_empty());
    }
}
