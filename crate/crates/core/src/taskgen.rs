//! Random synthesis tasks: a sampled program plus four inputs it runs on.
//!
//! Inputs are built constraint-first. Every `Regex` position in the program
//! demands some number of matches of its pattern; the generator materializes
//! that many instances of each pattern, shuffles them, and joins them with
//! short runs of filler. Odd-numbered attempts instead draw a free-form random
//! string, which covers programs the constructive route cannot satisfy. An
//! attempt succeeds when the program executes without error and the output
//! fits within the length limit.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsl::{
    self, Boundary, Delimiter, Expression, Pattern, Position, Program, RegexToken,
    MAX_CONST_POS, MAX_EXPRESSIONS, MAX_MATCH_INDEX, MAX_STRING_LEN,
};
use crate::rng::{domain, Rng};

/// Examples per task.
pub const NUM_EXAMPLES: usize = 4;
/// Input attempts per program before giving up on it.
pub const INPUT_ATTEMPTS: usize = 50;
/// Programs drawn per round of [`generate_task`].
pub const PROGRAM_RESAMPLES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub max_expressions: usize,
    pub max_io_len: usize,
    pub seed: u64,
    /// Weights over lengths `1..=max_expressions`; empty means uniform.
    #[serde(default)]
    pub length_weights: Vec<f64>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_expressions: MAX_EXPRESSIONS,
            max_io_len: MAX_STRING_LEN,
            seed: 0,
            length_weights: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum GenConfigError {
    #[error("max_expressions must be in 1..={MAX_EXPRESSIONS}, got {0}")]
    MaxExpressions(usize),
    #[error("max_io_len must be in 1..={MAX_STRING_LEN}, got {0}")]
    MaxIoLen(usize),
    #[error("length_weights must have one nonnegative weight per length with a positive sum")]
    Weights,
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenConfigError> {
        if !(1..=MAX_EXPRESSIONS).contains(&self.max_expressions) {
            return Err(GenConfigError::MaxExpressions(self.max_expressions));
        }
        if !(1..=MAX_STRING_LEN).contains(&self.max_io_len) {
            return Err(GenConfigError::MaxIoLen(self.max_io_len));
        }
        if !self.length_weights.is_empty() {
            let w = &self.length_weights;
            if w.len() != self.max_expressions
                || w.iter().any(|x| !(x.is_finite() && *x >= 0.0))
                || w.iter().sum::<f64>() <= 0.0
            {
                return Err(GenConfigError::Weights);
            }
        }
        Ok(())
    }

    /// Normalized probability of each length `1..=max_expressions`.
    pub fn length_distribution(&self) -> Vec<f64> {
        let w = if self.length_weights.is_empty() {
            vec![1.0; self.max_expressions]
        } else {
            self.length_weights.clone()
        };
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Example {
    #[serde(rename = "i")]
    pub input: String,
    #[serde(rename = "o")]
    pub output: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Task {
    pub program: Program,
    pub examples: Vec<Example>,
}

impl Task {
    /// Re-executes the program on every example.
    pub fn is_consistent(&self) -> bool {
        self.examples
            .iter()
            .all(|ex| self.program.execute(&ex.input).as_deref() == Ok(ex.output.as_str()))
    }
}

/// No compatible input was found within the attempt budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("no compatible input after {attempts} attempts")]
pub struct GiveUp {
    pub attempts: usize,
}

fn sample_position(rng: &mut Rng) -> Position {
    if rng.chance(0.5) {
        let patterns: Vec<Pattern> = Pattern::all().collect();
        let mut k = rng.range_inclusive(1, MAX_MATCH_INDEX as i64) as i8;
        if rng.chance(0.5) {
            k = -k;
        }
        Position::Regex {
            pattern: rng.choose(&patterns),
            k,
            boundary: if rng.chance(0.5) {
                Boundary::Start
            } else {
                Boundary::End
            },
        }
    } else {
        Position::ConstPos(rng.range_inclusive(-(MAX_CONST_POS as i64), MAX_CONST_POS as i64) as i8)
    }
}

fn sample_expression(rng: &mut Rng) -> Expression {
    if rng.chance(0.5) {
        let d = Delimiter::from_index(rng.below(dsl::DELIMITERS.len())).unwrap();
        Expression::ConstStr(d)
    } else {
        let p1 = sample_position(rng);
        let p2 = sample_position(rng);
        Expression::SubStr(p1, p2)
    }
}

/// Draws a program; its length follows the configured distribution.
pub fn sample_program(rng: &mut Rng, config: &GenConfig) -> Program {
    let len = 1 + rng.weighted(&config.length_distribution());
    sample_program_of_length(rng, len)
}

pub fn sample_program_of_length(rng: &mut Rng, len: usize) -> Program {
    let exprs = (0..len).map(|_| sample_expression(rng)).collect();
    Program::new(exprs).expect("sampled within grammar bounds")
}

const LOWER: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
const UPPER: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ";
const DIGITS: &[u8] = b"0123456789";
const PUNCT: &[u8] = b".,-:;/()@";
/// Filler classes: lowercase, digit, space.
const FILLER_WEIGHTS: [f64; 3] = [0.4, 0.2, 0.4];

fn push_from(rng: &mut Rng, out: &mut String, set: &[u8], n: usize) {
    for _ in 0..n {
        out.push(rng.choose(set) as char);
    }
}

fn instance(rng: &mut Rng, pattern: Pattern, out: &mut String) {
    match pattern {
        Pattern::Literal(d) => out.push_str(d.as_str()),
        Pattern::Token(t) => match t {
            RegexToken::Word => {
                let n = rng.range_inclusive(1, 6) as usize;
                match rng.below(3) {
                    0 => {
                        push_from(rng, out, UPPER, 1);
                        push_from(rng, out, LOWER, n - 1);
                    }
                    1 => push_from(rng, out, LOWER, n),
                    _ => push_from(rng, out, UPPER, n),
                }
            }
            RegexToken::Num => {
                let n = rng.range_inclusive(1, 4) as usize;
                push_from(rng, out, DIGITS, n);
            }
            RegexToken::Alphanum => {
                let n = rng.range_inclusive(1, 6) as usize;
                for _ in 0..n {
                    let set = [LOWER, UPPER, DIGITS][rng.below(3)];
                    push_from(rng, out, set, 1);
                }
            }
            RegexToken::AllCaps => {
                let n = rng.range_inclusive(1, 4) as usize;
                push_from(rng, out, UPPER, n);
            }
            RegexToken::PropCase => {
                let n = rng.range_inclusive(1, 6) as usize;
                push_from(rng, out, UPPER, 1);
                push_from(rng, out, LOWER, n);
            }
            RegexToken::Lower => {
                let n = rng.range_inclusive(1, 6) as usize;
                push_from(rng, out, LOWER, n);
            }
            RegexToken::Digit => push_from(rng, out, DIGITS, 1),
            RegexToken::Char => {
                let set = [LOWER, UPPER, DIGITS, PUNCT][rng.below(4)];
                push_from(rng, out, set, 1);
            }
        },
    }
}

fn filler(rng: &mut Rng, out: &mut String, n: usize) {
    for _ in 0..n {
        let set: &[u8] = match rng.weighted(&FILLER_WEIGHTS) {
            0 => LOWER,
            1 => DIGITS,
            _ => b" ",
        };
        push_from(rng, out, set, 1);
    }
}

/// Required match counts per pattern and the minimum input length implied by constant positions.
fn requirements(program: &Program) -> (BTreeMap<Pattern, usize>, usize) {
    let mut counts = BTreeMap::new();
    let mut min_len = 0usize;
    let mut note = |p: &Position| match *p {
        Position::Regex { pattern, k, .. } => {
            let c = counts.entry(pattern).or_insert(0usize);
            *c = (*c).max(k.unsigned_abs() as usize);
        }
        Position::ConstPos(n) => {
            let need = if n >= 0 { n as usize } else { (-(n as i64) - 1) as usize };
            min_len = min_len.max(need);
        }
    };
    for e in program.expressions() {
        if let Expression::SubStr(p1, p2) = e {
            note(p1);
            note(p2);
        }
    }
    (counts, min_len)
}

fn constructive_input(rng: &mut Rng, program: &Program, max_len: usize) -> String {
    let (counts, min_len) = requirements(program);
    let mut pieces: Vec<Pattern> = counts
        .iter()
        .flat_map(|(&p, &c)| std::iter::repeat_n(p, c))
        .collect();
    let all: Vec<Pattern> = Pattern::all().collect();
    for _ in 0..rng.below(3) {
        pieces.push(rng.choose(&all));
    }
    rng.shuffle(&mut pieces);
    let mut s = String::new();
    let lead = rng.below(3);
    filler(rng, &mut s, lead);
    for (i, p) in pieces.iter().enumerate() {
        if i > 0 {
            let gap = rng.range_inclusive(1, 3) as usize;
            filler(rng, &mut s, gap);
        }
        instance(rng, *p, &mut s);
    }
    let trail = rng.below(3);
    filler(rng, &mut s, trail);
    while s.len() < min_len {
        filler(rng, &mut s, 1);
    }
    s.truncate(max_len.max(min_len));
    s
}

fn free_input(rng: &mut Rng, max_len: usize) -> String {
    let len = rng.range_inclusive(1, max_len as i64) as usize;
    let mut s = String::with_capacity(len);
    for _ in 0..len {
        let set: &[u8] = match rng.below(6) {
            0 | 1 => LOWER,
            2 => UPPER,
            3 => DIGITS,
            4 => b" ",
            _ => PUNCT,
        };
        push_from(rng, &mut s, set, 1);
    }
    s
}

/// An input on which `program` succeeds with an output of at most `max_len` characters.
pub fn sample_compatible_input(
    rng: &mut Rng,
    program: &Program,
    max_len: usize,
) -> Result<(String, String), GiveUp> {
    for attempt in 0..INPUT_ATTEMPTS {
        let input = if attempt % 2 == 0 {
            constructive_input(rng, program, max_len)
        } else {
            free_input(rng, max_len)
        };
        if input.len() > max_len {
            continue;
        }
        if let Ok(output) = program.execute(&input) {
            if output.len() <= max_len {
                return Ok((input, output));
            }
        }
    }
    Err(GiveUp {
        attempts: INPUT_ATTEMPTS,
    })
}

/// One round of up to [`PROGRAM_RESAMPLES`] programs; `None` if all of them gave up.
///
/// The program length is drawn once per round, so resampling after a give-up
/// does not bias tasks towards short programs.
pub fn try_generate_task(rng: &mut Rng, config: &GenConfig) -> Option<Task> {
    let len = 1 + rng.weighted(&config.length_distribution());
    'program: for _ in 0..PROGRAM_RESAMPLES {
        let program = sample_program_of_length(rng, len);
        let mut examples = Vec::with_capacity(NUM_EXAMPLES);
        for _ in 0..NUM_EXAMPLES {
            match sample_compatible_input(rng, &program, config.max_io_len) {
                Ok((input, output)) => examples.push(Example { input, output }),
                Err(_) => continue 'program,
            }
        }
        let task = Task { program, examples };
        debug_assert!(task.is_consistent());
        return Some(task);
    }
    None
}

/// Draws a task, retrying rounds of program resamples until one succeeds.
pub fn generate_task(rng: &mut Rng, config: &GenConfig) -> Task {
    loop {
        if let Some(task) = try_generate_task(rng, config) {
            return task;
        }
    }
}

/// Task `index` of the corpus for `config.seed`; independent of how work is split.
pub fn corpus_task(config: &GenConfig, index: u64) -> Task {
    let mut rng = Rng::stream(config.seed, domain::CORPUS, index);
    generate_task(&mut rng, config)
}

/// `count` tasks generated on `workers` threads; the result does not depend on `workers`.
pub fn generate_corpus(config: &GenConfig, count: usize, workers: usize) -> Vec<Task> {
    let workers = workers.clamp(1, count.max(1));
    if workers == 1 {
        return (0..count as u64).map(|i| corpus_task(config, i)).collect();
    }
    let chunk = count.div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let lo = (w * chunk).min(count);
                let hi = ((w + 1) * chunk).min(count);
                scope.spawn(move || {
                    (lo..hi)
                        .map(|i| corpus_task(config, i as u64))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("generator thread panicked"))
            .collect()
    })
}

#[derive(Serialize, Deserialize)]
struct TaskRecord {
    program: String,
    examples: Vec<Example>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

pub fn write_tasks<W: Write>(tasks: &[Task], mut out: W) -> std::io::Result<()> {
    for t in tasks {
        let rec = TaskRecord {
            program: t.program.render(),
            examples: t.examples.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_corpus(tasks: &[Task], path: &Path) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path)?;
    write_tasks(tasks, std::io::BufWriter::new(file))?;
    Ok(())
}

pub fn read_tasks<R: BufRead>(reader: R) -> Result<Vec<Task>, CorpusError> {
    let mut tasks = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| CorpusError::Schema {
            line: i + 1,
            message,
        };
        let rec: TaskRecord = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        let program = dsl::parse(&rec.program).map_err(|e| schema(e.to_string()))?;
        if rec.examples.is_empty() || rec.examples.len() > NUM_EXAMPLES {
            return Err(schema(format!(
                "expected 1..={NUM_EXAMPLES} examples, got {}",
                rec.examples.len()
            )));
        }
        tasks.push(Task {
            program,
            examples: rec.examples,
        });
    }
    Ok(tasks)
}

pub fn read_corpus(path: &Path) -> Result<Vec<Task>, CorpusError> {
    let file = std::fs::File::open(path)?;
    read_tasks(std::io::BufReader::new(file))
}
