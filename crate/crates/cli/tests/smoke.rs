use std::path::Path;
use std::process::{Command, Output};

const SUBCOMMANDS: [&str; 8] = [
    "kg-stats",
    "train-filter",
    "eval-filter",
    "dump-candidates",
    "build-instructions",
    "train-surrogate",
    "eval-ftg",
    "ablate-context",
];

const SMALL: &str = r#"{
    "dataset": {"synthetic": {"seed": 3, "entities": 60, "relations": 3, "triples": 600}},
    "train": {"dim": 16, "steps": 200, "batch_size": 32, "negatives": 8},
    "surrogate": {"d_x": 8, "steps": 50},
    "k": 10,
    "generator": "surrogate"
}"#;

fn ftg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ftg"))
        .args(args)
        .output()
        .unwrap()
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.json");
    std::fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_string()
}

fn run_all(config: &str, out: &Path) {
    let out = out.to_str().unwrap();
    for cmd in SUBCOMMANDS {
        let o = ftg(&["--config", config, "--out", out, cmd]);
        assert!(
            o.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let stdout = String::from_utf8(o.stdout).unwrap();
        assert_eq!(stdout.lines().count(), 1, "{cmd} printed {stdout:?}");
        assert!(stdout.starts_with(cmd), "{cmd} printed {stdout:?}");
    }
}

fn bytes(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn all_subcommands_chain_and_leave_their_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let out = tmp.path().join("run");
    run_all(&config, &out);
    for name in [
        "resolved_config.json",
        "kg_stats.json",
        "filter.ckpt",
        "train_report.json",
        "metrics_filter.json",
        "recall.json",
        "candidates.jsonl",
        "instructions_tune.jsonl",
        "instructions_eval.jsonl",
        "surrogate.ckpt",
        "surrogate_report.json",
        "metrics_ftg.json",
        "eval_report.json",
        "outcomes.jsonl",
        "ablation.json",
    ] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let candidates = String::from_utf8(bytes(&out, "candidates.jsonl")).unwrap();
    let first: serde_json::Value =
        serde_json::from_str(candidates.lines().next().unwrap()).unwrap();
    assert_eq!(first["candidates"].as_array().unwrap().len(), 10);
}

#[test]
fn runs_are_reproducible_and_resolved_config_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    run_all(&config, &a);
    run_all(&config, &b);
    let replay = a.join("resolved_config.json");
    run_all(replay.to_str().unwrap(), &c);
    for name in [
        "filter.ckpt",
        "metrics_filter.json",
        "surrogate.ckpt",
        "metrics_ftg.json",
        "ablation.json",
    ] {
        assert_eq!(
            bytes(&a, name),
            bytes(&b, name),
            "{name} differs between runs"
        );
        assert_eq!(bytes(&a, name), bytes(&c, name), "{name} differs on replay");
    }
}

#[test]
fn failures_map_to_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let code = |args: &[&str]| ftg(args).status.code();

    assert_eq!(
        code(&["--out", out, "eval-filter"]),
        Some(3),
        "missing checkpoint"
    );
    assert_eq!(
        code(&["--out", out, "--heuristic", "three_hop", "kg-stats"]),
        Some(4)
    );
    assert_eq!(
        code(&["--out", out, "--generator", "gpt", "kg-stats"]),
        Some(4)
    );
    assert_eq!(code(&["--out", "/proc/ftg-nope", "kg-stats"]), Some(5));
    assert_eq!(
        code(&["--config", "/nonexistent.json", "--out", out, "kg-stats"]),
        Some(2)
    );
    assert_eq!(code(&["--out", out, "--k", "0", "kg-stats"]), Some(2));

    let o = ftg(&["--out", out, "eval-filter"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("filter.ckpt"));
}
