use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use fixsynth::analyze;
use fixsynth::dsl::parse;
use fixsynth::search::{group_records, run_search, trace_records, Method, SearchConfig, TraceRecord};
use fixsynth::taskgen::{generate_corpus, read_corpus, write_corpus, Example, GenConfig, Task};
use fixsynth::train::{self, evaluate, heldout_corpus, load_checkpoint, load_model, StepOutcome, TrainConfig, TrainState};

#[derive(Parser)]
#[command(name = "fixsynth", version, about = "String-transformation synthesis by example")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Greedy,
    Beam,
    Fixer,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Greedy => Method::Greedy,
            MethodArg::Beam => Method::Beam,
            MethodArg::Fixer => Method::Fixer,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Execute a program on inputs.
    Run {
        /// Program text, or a file holding it.
        #[arg(long)]
        program: String,
        #[arg(long = "input", num_args = 1..)]
        inputs: Vec<String>,
    },
    /// Search for a program consistent with an examples file.
    Synth {
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSON lines of {"i": input, "o": output}.
        #[arg(long)]
        examples: PathBuf,
        #[arg(long, value_enum, default_value = "fixer")]
        method: MethodArg,
        /// Most candidates executed.
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        inner_beam: usize,
        /// Where to write the trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Generate a task corpus.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = fixsynth::dsl::MAX_EXPRESSIONS)]
        max_expr: usize,
        #[arg(long, default_value_t = fixsynth::dsl::MAX_STRING_LEN)]
        max_io_len: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Train from a TOML config, writing metrics and checkpoints to a directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from `<out>/checkpoint` if present.
        #[arg(long)]
        resume: bool,
        /// Print a progress line every this many steps.
        #[arg(long, default_value_t = 100)]
        log_every: u64,
    },
    /// Evaluate a checkpoint and print accuracy as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Task corpus; without it, held-out tasks are generated from the checkpoint's task settings.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Held-out tasks to generate when no corpus is given.
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Held-out seed; defaults to the training seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "fixer")]
        method: MethodArg,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        inner_beam: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Where to write every trace as JSON lines.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Step-2 correction histograms and accuracy by length from saved traces.
    Analyze {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Only tasks whose ground truth has this many expressions.
        #[arg(long)]
        length: Option<usize>,
    },
    /// Finite-difference gradient checks.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    /// Exit 1: unsolved task, failed execution or failed check.
    Domain(String),
    /// Exit 2: bad input.
    Usage(String),
}

type Result<T> = std::result::Result<T, Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { program, inputs } => cmd_run(&program, &inputs),
        Command::Synth { checkpoint, examples, method, steps, inner_beam, trace } => {
            cmd_synth(&checkpoint, &examples, method.into(), steps, inner_beam, trace.as_deref())
        }
        Command::Gen { seed, count, max_expr, max_io_len, out, workers } => {
            cmd_gen(seed, count, max_expr, max_io_len, &out, workers)
        }
        Command::Train { config, out, seed, resume, log_every } => {
            cmd_train(&config, &out, seed, resume, log_every)
        }
        Command::Eval { checkpoint, corpus, count, seed, method, steps, inner_beam, workers, traces } => cmd_eval(
            &checkpoint,
            corpus.as_deref(),
            count,
            seed,
            method.into(),
            search_config(steps, inner_beam),
            workers,
            traces.as_deref(),
        ),
        Command::Analyze { traces, report, length } => cmd_analyze(&traces, &report, length),
        Command::Gradcheck { seed } => cmd_gradcheck(seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            if !msg.is_empty() {
                eprintln!("{msg}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn search_config(steps: usize, inner_beam: usize) -> SearchConfig {
    SearchConfig {
        budget: steps,
        inner_beam,
        ..SearchConfig::default()
    }
}

fn cmd_run(program: &str, inputs: &[String]) -> Result<()> {
    let text = if Path::new(program).is_file() {
        fs::read_to_string(program).map_err(usage)?
    } else {
        program.to_string()
    };
    let p = parse(text.trim()).map_err(usage)?;
    let mut failed = false;
    for input in inputs {
        let line = match p.execute(input) {
            Ok(out) => serde_json::json!({ "input": input, "output": out }),
            Err(e) => {
                failed = true;
                serde_json::json!({ "input": input, "error": format!("{:?}", e.kind), "message": e.to_string() })
            }
        };
        println!("{line}");
    }
    if failed {
        Err(Failure::Domain(String::new()))
    } else {
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExampleLine {
    i: String,
    o: String,
}

/// Reads `{"i", "o"}` lines, padding to `n` pairs by repeating the last.
fn read_examples(path: &Path, n: usize) -> Result<Vec<Example>> {
    let file = fs::File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(usage)?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: ExampleLine = serde_json::from_str(&line)
            .map_err(|e| usage(format!("{} line {}: {e}", path.display(), k + 1)))?;
        out.push(Example {
            input: ex.i,
            output: ex.o,
        });
    }
    if out.is_empty() {
        return Err(usage(format!("{}: no examples", path.display())));
    }
    if out.len() > n {
        return Err(usage(format!("{}: {} examples, the model takes {n}", path.display(), out.len())));
    }
    if out.len() < n {
        eprintln!(
            "note: {} example(s) given, repeating the last to make {n}",
            out.len()
        );
        while out.len() < n {
            out.push(out.last().unwrap().clone());
        }
    }
    Ok(out)
}

fn write_traces(path: &Path, records: impl IntoIterator<Item = TraceRecord>) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(usage)?);
    for r in records {
        writeln!(f, "{}", serde_json::to_string(&r).expect("records serialize")).map_err(usage)?;
    }
    f.flush().map_err(usage)
}

fn cmd_synth(
    checkpoint: &Path,
    examples: &Path,
    method: Method,
    steps: usize,
    inner_beam: usize,
    trace_path: Option<&Path>,
) -> Result<()> {
    let config = search_config(steps, inner_beam);
    config.validate().map_err(usage)?;
    let model = load_model(checkpoint).map_err(usage)?;
    let examples = read_examples(examples, model.config.examples)?;
    let trace = run_search(&model, &examples, &config, method);
    if let Some(p) = trace_path {
        write_traces(p, trace_records(0, None, &trace))?;
    }
    match trace.solution() {
        Some(step) => {
            println!("{}", step.program.as_deref().expect("a matching step has a program"));
            eprintln!("solved at step {}", trace.solved_at.unwrap());
            Ok(())
        }
        None => Err(Failure::Domain(format!(
            "unsolved after {} candidate(s)",
            trace.steps.len()
        ))),
    }
}

fn cmd_gen(seed: u64, count: usize, max_expr: usize, max_io_len: usize, out: &Path, workers: usize) -> Result<()> {
    let config = GenConfig {
        max_expressions: max_expr,
        max_io_len,
        seed,
        ..GenConfig::default()
    };
    config.validate().map_err(usage)?;
    let tasks = generate_corpus(&config, count, workers);
    write_corpus(&tasks, out).map_err(usage)
}

fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let config: TrainConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
    };
    config.validate().map_err(usage)?;
    Ok(config)
}

fn cmd_train(config: &Path, out: &Path, seed: Option<u64>, resume: bool, log_every: u64) -> Result<()> {
    let mut config = load_config(config)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let ckpt = out.join(train::CHECKPOINT_DIR);
    let mut state = if resume && ckpt.join(train::MANIFEST).exists() {
        let mut s = load_checkpoint(&ckpt).map_err(usage)?;
        if s.config.model != config.model || s.config.seed != config.seed {
            return Err(usage("checkpoint was trained with a different model or seed"));
        }
        s.config.steps = config.steps;
        eprintln!("resuming at step {}", s.step);
        s
    } else {
        TrainState::new(config).map_err(usage)?
    };
    let started = std::time::Instant::now();
    let first = state.step;
    let mut recent = 0.0;
    let mut recent_n = 0u64;
    let result = train::run(&mut state, Some(out), |s, outcome, record| {
        if let StepOutcome::Applied { loss } = outcome {
            recent += loss;
            recent_n += 1;
        }
        if log_every > 0 && s.step % log_every == 0 {
            let per = started.elapsed().as_secs_f64() / (s.step - first) as f64;
            eprintln!(
                "step {} loss {:.4} ({:.0} ms/step)",
                s.step,
                recent / recent_n.max(1) as f64,
                per * 1e3
            );
            recent = 0.0;
            recent_n = 0;
        }
        if let Some(r) = record {
            eprintln!("{}", serde_json::to_string(r).expect("metrics serialize"));
        }
    });
    match result {
        Ok(_) => Ok(()),
        Err(train::TrainError::Diverged { step }) => Err(Failure::Domain(format!(
            "training diverged at step {step}"
        ))),
        Err(e) => Err(usage(e)),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    checkpoint: &Path,
    corpus: Option<&Path>,
    count: usize,
    seed: Option<u64>,
    method: Method,
    search: SearchConfig,
    workers: usize,
    traces: Option<&Path>,
) -> Result<()> {
    search.validate().map_err(usage)?;
    let state = load_checkpoint(checkpoint).map_err(usage)?;
    let tasks: Vec<Task> = match corpus {
        Some(p) => read_corpus(p).map_err(usage)?,
        None => heldout_corpus(
            &state.config.gen,
            seed.unwrap_or(state.config.seed),
            count,
            workers,
        ),
    };
    let (metrics, all) = evaluate(&state.model, &tasks, &search, method, workers);
    if let Some(p) = traces {
        write_traces(
            p,
            tasks
                .iter()
                .zip(&all)
                .enumerate()
                .flat_map(|(i, (t, tr))| trace_records(i, Some(&t.program), tr)),
        )?;
    }
    println!("{}", serde_json::to_string_pretty(&metrics).expect("metrics serialize"));
    Ok(())
}

fn cmd_analyze(traces: &Path, report: &Path, length: Option<usize>) -> Result<()> {
    let file = fs::File::open(traces).map_err(|e| usage(format!("{}: {e}", traces.display())))?;
    let mut records = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(usage)?;
        if line.trim().is_empty() {
            continue;
        }
        let r: TraceRecord = serde_json::from_str(&line)
            .map_err(|e| usage(format!("{} line {}: {e}", traces.display(), k + 1)))?;
        records.push(r);
    }
    let grouped = group_records(&records);
    let text = analyze::write_report(report, &grouped, length).map_err(usage)?;
    print!("{text}");
    Ok(())
}

fn cmd_gradcheck(seed: u64) -> Result<()> {
    let mut failed = 0;
    for case in fixsynth::gradcheck::run_suite(seed) {
        let ok = case.passes();
        failed += usize::from(!ok);
        println!(
            "{:<4} {:<14} worst rel error {:.3e} (tolerance {:.0e}, {} values, worst at {}[{}])",
            if ok { "ok" } else { "FAIL" },
            case.name,
            case.report.worst_rel_error,
            case.tolerance,
            case.report.checked,
            case.report.worst_param,
            case.report.worst_index
        );
    }
    if failed > 0 {
        Err(Failure::Domain(format!("{failed} check(s) failed")))
    } else {
        Ok(())
    }
}
