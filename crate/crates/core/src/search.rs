//! Inference-time search: the beam baseline and iterative fixing, both under
//! an execution budget of `S` candidates.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::dsl::{ExecErrorKind, Program};
use crate::model::{self, Model};
use crate::taskgen::Example;
use crate::vocab::{self, TokenId, TokenSeq, BOS, EOS};

/// A left-to-right decoder that scores one token at a time.
pub trait StepModel {
    type State: Clone;

    fn vocab_size(&self) -> usize;
    fn initial_state(&self) -> Self::State;
    /// For each state and the token fed at this step, the next state and the
    /// log-probabilities of every token.
    fn step(&self, states: &[&Self::State], prev: &[TokenId]) -> Vec<(Self::State, Vec<f64>)>;
}

/// Descending score, then ascending token order.
fn order(a: (&TokenSeq, f64), b: (&TokenSeq, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(b.0))
}

/// Beam search. Live hypotheses keep the best `width` non-`EOS` expansions at
/// each step; `EOS` expansions (and anything reaching `t_max`) go to a pool of
/// finished sequences capped at `width`. Returns the pool best first.
///
/// When the per-step distribution does not depend on the prefix, the result is
/// exactly the top `width` sequences. Width 1 is not greedy decoding: it also
/// keeps the best `EOS` seen along the greedy non-`EOS` path.
pub fn beam_search<M: StepModel>(model: &M, width: usize, t_max: usize) -> Vec<(TokenSeq, f64)> {
    assert!(width >= 1, "beam width must be positive");
    let mut alive: Vec<(TokenSeq, f64, M::State)> =
        vec![(TokenSeq::default(), 0.0, model.initial_state())];
    let mut finished: Vec<(TokenSeq, f64)> = Vec::new();
    for t in 0..t_max {
        if alive.is_empty() {
            break;
        }
        let states: Vec<&M::State> = alive.iter().map(|a| &a.2).collect();
        let prev: Vec<TokenId> = alive
            .iter()
            .map(|a| a.0.ids().last().copied().unwrap_or(BOS))
            .collect();
        let stepped = model.step(&states, &prev);
        let last = t + 1 == t_max;
        let mut expansions: Vec<(TokenSeq, f64, usize)> = Vec::new();
        for (i, (_, lp)) in stepped.iter().enumerate() {
            for (tok, &l) in lp.iter().enumerate() {
                if l == f64::NEG_INFINITY {
                    continue;
                }
                let mut seq = alive[i].0.clone();
                seq.0.push(tok as TokenId);
                let score = alive[i].1 + l;
                if last || tok as TokenId == EOS {
                    finished.push((seq, score));
                } else {
                    expansions.push((seq, score, i));
                }
            }
        }
        finished.sort_by(|a, b| order((&a.0, a.1), (&b.0, b.1)));
        finished.truncate(width);
        expansions.sort_by(|a, b| order((&a.0, a.1), (&b.0, b.1)));
        expansions.truncate(width);
        alive = expansions
            .into_iter()
            .map(|(seq, score, parent)| (seq, score, stepped[parent].0.clone()))
            .collect();
        if finished.len() == width {
            let worst = finished[width - 1].1;
            if alive.iter().all(|a| a.1 < worst) {
                break;
            }
        }
    }
    finished
}

/// Argmax decoding: the most probable token at each step (lowest id on ties)
/// until `EOS` or `t_max` tokens. Returns the sequence and its log-probability.
pub fn greedy_decode<M: StepModel>(model: &M, t_max: usize) -> (TokenSeq, f64) {
    let mut state = model.initial_state();
    let mut seq = TokenSeq::default();
    let mut total = 0.0;
    let mut prev = BOS;
    for _ in 0..t_max {
        let (next, lp) = model.step(&[&state], &[prev]).pop().unwrap();
        let mut best = 0;
        for (i, &l) in lp.iter().enumerate() {
            if l > lp[best] {
                best = i;
            }
        }
        total += lp[best];
        prev = best as TokenId;
        seq.0.push(prev);
        state = next;
        if prev == EOS {
            break;
        }
    }
    (seq, total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// `S`: most candidate programs executed per task.
    pub budget: usize,
    pub inner_beam: usize,
    pub t_max: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: 10,
            inner_beam: 10,
            t_max: vocab::T_MAX,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.budget == 0 || self.inner_beam == 0 || self.t_max == 0 {
            return Err("budget, inner_beam and t_max must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Greedy,
    Beam,
    Fixer,
}

impl Method {
    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "greedy" => Some(Method::Greedy),
            "beam" => Some(Method::Beam),
            "fixer" => Some(Method::Fixer),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Greedy => "greedy",
            Method::Beam => "beam",
            Method::Fixer => "fixer",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ok(String),
    Err(ExecErrorKind),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub tokens: Vec<TokenId>,
    /// Rendered program, or `None` when the tokens do not decode.
    pub program: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decode_error: Option<String>,
    /// One entry per example; empty when the tokens do not decode.
    pub outputs: Vec<Outcome>,
    pub matched: bool,
    pub log_prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixTrace {
    pub method: Method,
    pub steps: Vec<TraceStep>,
    /// 1-based step of the first matching candidate.
    pub solved_at: Option<usize>,
}

impl FixTrace {
    pub fn solved(&self) -> bool {
        self.solved_at.is_some()
    }

    pub fn solution(&self) -> Option<&TraceStep> {
        self.solved_at.map(|s| &self.steps[s - 1])
    }
}

/// Decodes and runs a candidate on every example.
pub fn evaluate_candidate(tokens: &TokenSeq, log_prob: f64, examples: &[Example]) -> (TraceStep, Option<Program>) {
    match vocab::tokens_to_program(tokens) {
        Ok(program) => {
            let outputs: Vec<Outcome> = examples
                .iter()
                .map(|ex| match program.execute(&ex.input) {
                    Ok(s) => Outcome::Ok(s),
                    Err(e) => Outcome::Err(e.kind),
                })
                .collect();
            let matched = examples
                .iter()
                .zip(&outputs)
                .all(|(ex, o)| matches!(o, Outcome::Ok(s) if *s == ex.output));
            let step = TraceStep {
                tokens: tokens.0.clone(),
                program: Some(program.render()),
                decode_error: None,
                outputs,
                matched,
                log_prob,
            };
            (step, Some(program))
        }
        Err(e) => (
            TraceStep {
                tokens: tokens.0.clone(),
                program: None,
                decode_error: Some(e.to_string()),
                outputs: Vec::new(),
                matched: false,
                log_prob,
            },
            None,
        ),
    }
}

fn push_step(trace: &mut FixTrace, step: TraceStep) -> bool {
    let matched = step.matched;
    trace.steps.push(step);
    if matched {
        trace.solved_at = Some(trace.steps.len());
    }
    matched
}

/// Supplies decoders for the search procedures: one conditioned on the
/// examples alone, one conditioned on a candidate's executed outputs.
pub trait Synthesizer {
    type Decoder<'a>: StepModel
    where
        Self: 'a;

    fn first<'a>(&'a self, examples: &[Example]) -> Self::Decoder<'a>;
    /// `executed[i]` is the candidate's output on example `i`, `None` on failure.
    fn fixer<'a>(&'a self, examples: &[Example], executed: &[Option<String>]) -> Self::Decoder<'a>;
}

impl<T: Scalar> Synthesizer for Model<T> {
    type Decoder<'a> = model::LstmDecoder<'a, T>;

    fn first<'a>(&'a self, examples: &[Example]) -> Self::Decoder<'a> {
        let z = self.encode_examples(examples);
        self.decoder(&z)
    }

    fn fixer<'a>(&'a self, examples: &[Example], executed: &[Option<String>]) -> Self::Decoder<'a> {
        let z = self.encode(&model::executed_triplets(examples, executed)).data;
        self.decoder(&z)
    }
}

fn empty_trace(method: Method) -> FixTrace {
    FixTrace {
        method,
        steps: Vec::new(),
        solved_at: None,
    }
}

/// Greedy decoding only: one candidate.
pub fn run_greedy<M: Synthesizer>(model: &M, examples: &[Example], config: &SearchConfig) -> FixTrace {
    let (seq, lp) = greedy_decode(&model.first(examples), config.t_max);
    let mut trace = empty_trace(Method::Greedy);
    push_step(&mut trace, evaluate_candidate(&seq, lp, examples).0);
    trace
}

/// Beam of width `S` from the example encoding; candidates run best first.
pub fn run_beam_baseline<M: Synthesizer>(
    model: &M,
    examples: &[Example],
    config: &SearchConfig,
) -> FixTrace {
    let mut trace = empty_trace(Method::Beam);
    for (seq, lp) in beam_search(&model.first(examples), config.budget, config.t_max) {
        if push_step(&mut trace, evaluate_candidate(&seq, lp, examples).0) {
            break;
        }
    }
    trace
}

/// Iterative fixing: greedy first guess, then repeatedly condition on the
/// latest candidate's executions and take the most probable unseen sequence.
/// The inner beam widens once when every sequence it returns was already
/// tried; if that also fails the search stops early.
pub fn run_fixer_search<M: Synthesizer>(
    model: &M,
    examples: &[Example],
    config: &SearchConfig,
) -> FixTrace {
    let mut trace = empty_trace(Method::Fixer);
    let (seq, lp) = greedy_decode(&model.first(examples), config.t_max);
    let (step, mut program) = evaluate_candidate(&seq, lp, examples);
    let mut seen: HashSet<TokenSeq> = HashSet::from([seq]);
    if push_step(&mut trace, step) {
        return trace;
    }
    while trace.steps.len() < config.budget {
        let executed = model::execute_candidate(program.as_ref(), examples);
        let dec = model.fixer(examples, &executed);
        let pick = |width: usize| {
            beam_search(&dec, width, config.t_max)
                .into_iter()
                .find(|(s, _)| !seen.contains(s))
        };
        let Some((next, lp)) = pick(config.inner_beam).or_else(|| pick(config.inner_beam * 2))
        else {
            break;
        };
        let (step, p) = evaluate_candidate(&next, lp, examples);
        seen.insert(next);
        program = p;
        if push_step(&mut trace, step) {
            break;
        }
    }
    trace
}

pub fn run_search<M: Synthesizer>(
    model: &M,
    examples: &[Example],
    config: &SearchConfig,
    method: Method,
) -> FixTrace {
    match method {
        Method::Greedy => run_greedy(model, examples, config),
        Method::Beam => run_beam_baseline(model, examples, config),
        Method::Fixer => run_fixer_search(model, examples, config),
    }
}

/// One line of a trace file: a single step of one task's search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub task: usize,
    pub method: Method,
    /// 1-based.
    pub step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    #[serde(flatten)]
    pub detail: TraceStep,
}

pub fn trace_records(task: usize, truth: Option<&Program>, trace: &FixTrace) -> Vec<TraceRecord> {
    trace
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| TraceRecord {
            task,
            method: trace.method,
            step: i + 1,
            truth: truth.map(Program::render),
            detail: s.clone(),
        })
        .collect()
}

/// Regroups trace records into `(task, truth, trace)`, ordered by task then method.
pub fn group_records(records: &[TraceRecord]) -> Vec<(usize, Option<String>, FixTrace)> {
    let mut map: std::collections::BTreeMap<(usize, Method), (Option<String>, Vec<TraceRecord>)> =
        Default::default();
    for r in records {
        let e = map.entry((r.task, r.method)).or_default();
        if e.0.is_none() {
            e.0 = r.truth.clone();
        }
        e.1.push(r.clone());
    }
    map.into_iter()
        .map(|((task, method), (truth, mut recs))| {
            recs.sort_by_key(|r| r.step);
            let steps: Vec<TraceStep> = recs.into_iter().map(|r| r.detail).collect();
            let solved_at = steps.iter().position(|s| s.matched).map(|i| i + 1);
            (
                task,
                truth,
                FixTrace {
                    method,
                    steps,
                    solved_at,
                },
            )
        })
        .collect()
}
