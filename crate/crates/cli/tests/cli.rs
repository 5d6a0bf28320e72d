use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fixsynth::model::ModelConfig;
use fixsynth::search::TraceRecord;
use fixsynth::taskgen::{corpus_task, GenConfig, Task};
use fixsynth::train::{save_checkpoint, TrainConfig, TrainState};

const INITIALS: &str = r#"Concat(SubStr(ConstPos(0), ConstPos(1)),
       ConstStr(". "),
       SubStr(Regex(Word, -1, Start), Regex(",", 1, Start)),
       ConstStr(" : "),
       SubStr(Regex(Num, 1, Start), Regex("-", 1, Start)))"#;

fn fixsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fixsynth"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_abbreviates_names_and_area_codes() {
    let o = fixsynth(&[
        "run",
        "--program",
        INITIALS,
        "--input",
        "Mark Henry, 521-625-2716",
        "Barry M. Myers, 617-278-8787",
        "Michael Jones, 425-267-2871",
        "Jon Sanders, 617-225-9819",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let outs: Vec<String> = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["output"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(outs, ["M. Henry : 521", "B. Myers : 617", "M. Jones : 425", "J. Sanders : 617"]);
}

#[test]
fn run_reads_programs_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("prog.txt");
    fs::write(&p, INITIALS).unwrap();
    let o = fixsynth(&["run", "--program", p.to_str().unwrap(), "--input", "Jon Sanders, 617-225-9819"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("J. Sanders : 617"));
}

#[test]
fn run_exit_codes() {
    let bad = fixsynth(&["run", "--program", "Concat(", "--input", "x"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(!bad.stderr.is_empty());
    let o = fixsynth(&[
        "run",
        "--program",
        "Concat(SubStr(Regex(Num, 1, Start), Regex(Num, 1, End)))",
        "--input",
        "abc 12",
        "no digits",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["output"], "12");
    assert_eq!(lines[1]["error"], "NoSuchMatch");
}

#[test]
fn unknown_flags_are_usage_errors() {
    assert_eq!(fixsynth(&["run", "--program", INITIALS, "--bogus"]).status.code(), Some(2));
    assert_eq!(fixsynth(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for p in [&a, &b] {
        let o = fixsynth(&["gen", "--seed", "1", "--count", "10", "--max-expr", "3", "--out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    let text = fs::read(&a).unwrap();
    assert_eq!(text, fs::read(&b).unwrap());
    assert_eq!(String::from_utf8(text).unwrap().lines().count(), 10);
}

#[test]
fn gradcheck_passes() {
    let o = fixsynth(&["gradcheck", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("ok")));
}

fn small_model() -> ModelConfig {
    ModelConfig {
        char_embed: 8,
        token_embed: 16,
        ..ModelConfig::with_hidden(32)
    }
}

fn config(model: ModelConfig) -> TrainConfig {
    TrainConfig {
        batch_size: 1,
        steps: 1,
        eval_every: 0,
        eval_tasks: 1,
        checkpoint_every: 0,
        seed: 4,
        model,
        gen: GenConfig {
            max_expressions: 2,
            max_io_len: 20,
            ..GenConfig::default()
        },
        optimizer: Default::default(),
        search: Default::default(),
        workers: 1,
    }
}

fn write_examples(task: &Task, path: &Path, count: usize) {
    let lines: Vec<String> = task.examples[..count]
        .iter()
        .map(|e| serde_json::json!({"i": e.input, "o": e.output}).to_string())
        .collect();
    fs::write(path, lines.join("\n") + "\n").unwrap();
}

fn read_trace(path: &Path) -> Vec<TraceRecord> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn overfit_checkpoint_solves_its_task_at_step_one() {
    let task = corpus_task(
        &GenConfig {
            max_expressions: 2,
            max_io_len: 20,
            seed: 8,
            ..GenConfig::default()
        },
        0,
    );
    let mut cfg = config(small_model());
    cfg.optimizer.lr = 1e-2;
    let mut state = TrainState::new(cfg).unwrap();
    for _ in 0..400 {
        state.train_step(std::slice::from_ref(&task));
    }
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ckpt");
    save_checkpoint(&state, &ckpt).unwrap();
    let ex = dir.path().join("ex.jsonl");
    write_examples(&task, &ex, 4);
    let trace = dir.path().join("trace.jsonl");
    let o = fixsynth(&[
        "synth", "--checkpoint", ckpt.to_str().unwrap(), "--examples", ex.to_str().unwrap(),
        "--method", "fixer", "--steps", "10", "--trace", trace.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let records = read_trace(&trace);
    assert_eq!(records.len(), 1);
    assert!(records[0].detail.matched);
    let found = fixsynth::dsl::parse(stdout(&o).trim()).unwrap();
    assert!(task.examples.iter().all(|e| found.execute(&e.input).as_deref() == Ok(e.output.as_str())));
}

#[test]
fn untrained_checkpoint_exhausts_the_budget() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ckpt");
    save_checkpoint(&TrainState::new(config(small_model())).unwrap(), &ckpt).unwrap();
    let task = corpus_task(
        &GenConfig {
            max_expressions: 3,
            max_io_len: 20,
            seed: 2,
            ..GenConfig::default()
        },
        3,
    );
    let ex = dir.path().join("ex.jsonl");
    // Two pairs: padded to four by repeating the last.
    write_examples(&task, &ex, 2);
    for method in ["beam", "fixer"] {
        let trace = dir.path().join(format!("{method}.jsonl"));
        let o = fixsynth(&[
            "synth", "--checkpoint", ckpt.to_str().unwrap(), "--examples", ex.to_str().unwrap(),
            "--method", method, "--steps", "4", "--trace", trace.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(1), "{method}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("repeating the last"));
        let records = read_trace(&trace);
        assert!(!records.is_empty() && records.len() <= 4);
    }
    fs::write(&ex, "{\"i\": \"a\"}\n").unwrap();
    let o = fixsynth(&["synth", "--checkpoint", ckpt.to_str().unwrap(), "--examples", ex.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ckpt");
    save_checkpoint(&TrainState::new(config(small_model())).unwrap(), &ckpt).unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let o = fixsynth(&["gen", "--seed", "5", "--count", "6", "--max-expr", "2", "--max-io-len", "20", "--out", corpus.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let traces = dir.path().join("traces.jsonl");
    let o = fixsynth(&[
        "eval", "--checkpoint", ckpt.to_str().unwrap(), "--corpus", corpus.to_str().unwrap(),
        "--method", "fixer", "--steps", "10", "--workers", "2", "--traces", traces.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let m: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let acc = m["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(m["tasks"], 6);

    let report = dir.path().join("report");
    let o = fixsynth(&["analyze", "--traces", traces.to_str().unwrap(), "--report", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    for f in ["report.txt", "step2.json", "step2.csv", "by_length.csv"] {
        assert!(report.join(f).exists(), "{f}");
    }
    assert!(stdout(&o).contains("accuracy by ground-truth length"));
}

#[test]
fn train_writes_metrics_and_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(ModelConfig {
        char_embed: 4,
        token_embed: 6,
        ..ModelConfig::with_hidden(8)
    });
    cfg.batch_size = 2;
    cfg.steps = 4;
    cfg.eval_every = 2;
    cfg.eval_tasks = 2;
    cfg.search.budget = 2;
    cfg.search.inner_beam = 2;
    cfg.search.t_max = 30;
    let toml_path = dir.path().join("cfg.toml");
    fs::write(&toml_path, toml::to_string(&cfg).unwrap()).unwrap();
    let out = dir.path().join("out");
    let o = fixsynth(&["train", "--config", toml_path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    assert!(out.join("checkpoint").join("manifest.json").exists());

    fs::write(&toml_path, "batch_size = 2\nsurprise = 1\n").unwrap();
    let o = fixsynth(&["train", "--config", toml_path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
