//! Byte-exact comparisons against the hand-written files in `golden/`.

use std::path::PathBuf;

use ftg_core::adapter::{decode_surrogate, encode_surrogate, Surrogate};
use ftg_core::checkpoint::{decode_model, encode_model};
use ftg_core::ego::{context_heuristic, ContextConfig, Heuristic};
use ftg_core::filter::{split_queries, CandidateMode, CandidateSet, Query};
use ftg_core::instruct::{build_sample, read_jsonl, verbalize, write_jsonl, InstructionSample};
use ftg_core::kg::{KnowledgeGraph, Split};
use ftg_core::kge::{EmbeddingModel, ModelKind};

pub const REL: &str =
    "military/military conflict/combatants./military/military combatant group/combatants";

fn golden(name: &str) -> Result<Vec<u8>, String> {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("golden")
        .join(name);
    std::fs::read(&p).map_err(|e| format!("{}: {e}", p.display()))
}

fn golden_text(name: &str) -> Result<String, String> {
    String::from_utf8(golden(name)?).map_err(|e| e.to_string())
}

fn expect<T: PartialEq + std::fmt::Debug>(what: &str, got: T, want: T) -> Result<(), String> {
    if got == want {
        Ok(())
    } else {
        Err(format!("{what}: got {got:?}, want {want:?}"))
    }
}

fn rows(r: &[(&str, &str, &str)]) -> Vec<(String, String, String)> {
    r.iter()
        .map(|(h, r, t)| (h.to_string(), r.to_string(), t.to_string()))
        .collect()
}

pub fn kg() -> KnowledgeGraph {
    KnowledgeGraph::from_labeled(
        &rows(&[
            (
                "Barack Obama",
                "/people/person/nationality",
                "United States",
            ),
            ("Barack Obama", "/people/person/place_of_birth", "Honolulu"),
            ("Michelle Obama", "/people/person/spouse_s", "Barack Obama"),
            (
                "Honolulu",
                "/location/location/containedby",
                "United States",
            ),
        ]),
        &[],
        &rows(&[
            ("Barack Obama", "/people/person/profession", "Lawyer"),
            ("War on Terrorism", REL, "Canada"),
        ]),
    )
    .unwrap()
}

fn cset(q: Query, ids: &[usize]) -> CandidateSet {
    CandidateSet {
        query: q,
        candidates: ids
            .iter()
            .enumerate()
            .map(|(i, &e)| (e, 1.0 - i as f32 * 0.25))
            .collect(),
        k: ids.len(),
        target_in_topk: true,
        raw_target_rank: Some(1),
        forced_inclusion: false,
    }
}

/// A tail sample with context and graph vector, and a head sample without.
pub fn samples(kg: &KnowledgeGraph) -> Vec<InstructionSample> {
    let queries = split_queries(kg, Split::Test);
    let dummy = EmbeddingModel::init(
        ModelKind::TransE,
        kg.num_entities(),
        kg.num_relations(),
        2,
        6.0,
        0,
    )
    .unwrap();
    let cfg = ContextConfig::default();
    let ctx = context_heuristic(kg, &dummy, &queries[0], Heuristic::Full1Hop, &cfg).unwrap();
    let vec = vec![0.1f32, -2.5, 3.0, -0.0, 1e-7, 123456.79];
    let tail = build_sample(
        kg,
        &cset(queries[0].clone(), &[4, 2, 1]),
        Some(&ctx),
        Some(vec),
        CandidateMode::Eval,
    )
    .unwrap();
    let lawyer = context_heuristic(kg, &dummy, &queries[1], Heuristic::Full1Hop, &cfg).unwrap();
    let head = build_sample(
        kg,
        &cset(queries[1].clone(), &[0, 3]),
        Some(&lawyer),
        None,
        CandidateMode::Eval,
    )
    .unwrap();
    vec![tail, head]
}

pub fn check_verbalization() -> Result<(), String> {
    let kg = kg();
    let mut out = String::new();
    for q in split_queries(&kg, Split::Test) {
        out.push_str(&format!(
            "{}\t{}\n",
            q.id,
            verbalize(&kg, &q).map_err(|e| e.to_string())?
        ));
    }
    expect("verbalization", out, golden_text("verbalization.txt")?)
}

pub fn check_rendering() -> Result<(), String> {
    let kg = kg();
    let s = &samples(&kg)[0];
    expect(
        "render",
        format!("{}\n", s.render()),
        golden_text("instruction.txt")?,
    )?;
    expect(
        "prompt",
        format!("{}\n", s.render_prompt()),
        golden_text("prompt.txt")?,
    )
}

pub fn check_jsonl() -> Result<(), String> {
    let kg = kg();
    let s = samples(&kg);
    let mut buf = Vec::new();
    write_jsonl(&s, &mut buf, true).map_err(|e| e.to_string())?;
    expect(
        "jsonl",
        String::from_utf8(buf.clone()).unwrap(),
        golden_text("samples.jsonl")?,
    )?;
    let p = std::env::temp_dir().join(format!(
        "ftg-golden-{}-{:?}.jsonl",
        std::process::id(),
        std::thread::current().id()
    ));
    std::fs::write(&p, &buf).map_err(|e| e.to_string())?;
    let back = read_jsonl(&p).map_err(|e| e.to_string());
    let _ = std::fs::remove_file(&p);
    let back = back?;
    expect("read-back length", back.len(), 2)?;
    expect("head sample read-back", &back[1], &s[1])?;
    let mut first = s[0].clone();
    first.graph_vec = Some(vec![0.1, -2.5, 3.0, 0.0, 1e-7, 123456.79]);
    expect("tail sample read-back", &back[0], &first)
}

pub fn check_checkpoint() -> Result<(), String> {
    let m = EmbeddingModel::from_parts(
        ModelKind::TransE,
        2,
        6.0,
        9,
        vec![1.0, -0.5, 0.25, 2.0],
        vec![0.5, 0.0],
    )
    .unwrap();
    let bytes = encode_model(&m).map_err(|e| e.to_string())?;
    expect("checkpoint bytes", bytes, golden("transe.ckpt")?)?;
    expect(
        "decoded golden",
        decode_model(&golden("transe.ckpt")?).map_err(|e| e.to_string())?,
        m,
    )?;
    for kind in ModelKind::ALL {
        let m = EmbeddingModel::init(kind, 5, 3, 4, 6.0, 17).unwrap();
        let back = decode_model(&encode_model(&m).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        expect("model round trip", back, m)?;
    }
    let s = Surrogate {
        d_s: 2,
        d_x: 3,
        seed: 4,
        w_p: (0..18).map(|i| i as f32 * 0.5 - 3.0).collect(),
        w_c: (0..6).map(|i| -(i as f32)).collect(),
    };
    let bytes = encode_surrogate(&s).map_err(|e| e.to_string())?;
    expect("surrogate magic", &bytes[..8], b"FTGKGE1\n".as_slice())?;
    expect(
        "surrogate round trip",
        decode_surrogate(&bytes).map_err(|e| e.to_string())?,
        s,
    )?;
    if decode_model(&bytes).is_ok() {
        return Err("surrogate checkpoint decoded as an embedding model".into());
    }
    Ok(())
}
