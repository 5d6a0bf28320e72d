//! The string-transformation language: a top-level `Concat` over constant
//! strings and substrings delimited by position expressions.
//!
//! ```text
//! P := Concat(e_1, ..., e_n)            1 <= n <= 10
//! e := ConstStr(s) | SubStr(p_1, p_2)
//! p := Regex(r, k, Start | End) | ConstPos(n)
//! r := t | s
//! t := Word | Num | Alphanum | AllCaps | PropCase | Lower | Digit | Char
//! s := " " | "." | ". " | "," | ", " | "-" | ":" | " : " | ";" | "/" | "(" | ")" | "@"
//! ```
//!
//! Positions are character boundaries `0..=len`; `SubStr` extracts the
//! half-open range `[p_1, p_2)`.

mod exec;
mod parse;

use std::fmt;

pub use exec::{eval_position, ExecError, ExecErrorKind};
pub use parse::{parse, ParseError};

/// Upper bound on the number of top-level expressions.
pub const MAX_EXPRESSIONS: usize = 10;
/// `K`: match indices range over `-K..=K`.
pub const MAX_MATCH_INDEX: i8 = 5;
/// `L`: constant positions range over `-L..=L`.
pub const MAX_CONST_POS: i8 = 10;
/// Maximum length of an input or output string.
pub const MAX_STRING_LEN: usize = 80;

/// Character-class tokens usable as the `r` argument of `Regex`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegexToken {
    /// `[A-Za-z]+`
    Word,
    /// `[0-9]+`
    Num,
    /// `[A-Za-z0-9]+`
    Alphanum,
    /// `[A-Z]+`
    AllCaps,
    /// `[A-Z][a-z]+`
    PropCase,
    /// `[a-z]+`
    Lower,
    /// `[0-9]`, a single digit
    Digit,
    /// any single non-space character
    Char,
}

impl RegexToken {
    pub const ALL: [RegexToken; 8] = [
        RegexToken::Word,
        RegexToken::Num,
        RegexToken::Alphanum,
        RegexToken::AllCaps,
        RegexToken::PropCase,
        RegexToken::Lower,
        RegexToken::Digit,
        RegexToken::Char,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegexToken::Word => "Word",
            RegexToken::Num => "Num",
            RegexToken::Alphanum => "Alphanum",
            RegexToken::AllCaps => "AllCaps",
            RegexToken::PropCase => "PropCase",
            RegexToken::Lower => "Lower",
            RegexToken::Digit => "Digit",
            RegexToken::Char => "Char",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Leftmost, non-overlapping, maximal matches as `(start, end)` byte ranges.
    pub fn matches(self, input: &str) -> Vec<(usize, usize)> {
        let bytes = input.as_bytes();
        let run = |class: fn(u8) -> bool| -> Vec<(usize, usize)> {
            let mut out = Vec::new();
            let mut i = 0;
            while i < bytes.len() {
                if class(bytes[i]) {
                    let start = i;
                    while i < bytes.len() && class(bytes[i]) {
                        i += 1;
                    }
                    out.push((start, i));
                } else {
                    i += 1;
                }
            }
            out
        };
        let single = |class: fn(u8) -> bool| -> Vec<(usize, usize)> {
            (0..bytes.len())
                .filter(|&i| class(bytes[i]))
                .map(|i| (i, i + 1))
                .collect()
        };
        match self {
            RegexToken::Word => run(|b| b.is_ascii_alphabetic()),
            RegexToken::Num => run(|b| b.is_ascii_digit()),
            RegexToken::Alphanum => run(|b| b.is_ascii_alphanumeric()),
            RegexToken::AllCaps => run(|b| b.is_ascii_uppercase()),
            RegexToken::Lower => run(|b| b.is_ascii_lowercase()),
            RegexToken::Digit => single(|b| b.is_ascii_digit()),
            RegexToken::Char => single(|b| b != b' '),
            RegexToken::PropCase => {
                let mut out = Vec::new();
                let mut i = 0;
                while i < bytes.len() {
                    if bytes[i].is_ascii_uppercase()
                        && i + 1 < bytes.len()
                        && bytes[i + 1].is_ascii_lowercase()
                    {
                        let start = i;
                        i += 1;
                        while i < bytes.len() && bytes[i].is_ascii_lowercase() {
                            i += 1;
                        }
                        out.push((start, i));
                    } else {
                        i += 1;
                    }
                }
                out
            }
        }
    }
}

/// The closed constant vocabulary, shared by `ConstStr` and literal `Regex` patterns.
pub const DELIMITERS: [&str; 13] = [
    " ", ".", ". ", ",", ", ", "-", ":", " : ", ";", "/", "(", ")", "@",
];

/// A member of [`DELIMITERS`], stored by index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Delimiter(u8);

impl Delimiter {
    pub fn from_index(index: usize) -> Option<Self> {
        (index < DELIMITERS.len()).then_some(Delimiter(index as u8))
    }

    pub fn from_literal(s: &str) -> Option<Self> {
        DELIMITERS
            .iter()
            .position(|d| *d == s)
            .map(|i| Delimiter(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn as_str(self) -> &'static str {
        DELIMITERS[self.0 as usize]
    }

    pub fn all() -> impl Iterator<Item = Delimiter> {
        (0..DELIMITERS.len() as u8).map(Delimiter)
    }

    /// Non-overlapping literal occurrences, scanned left to right.
    pub fn matches(self, input: &str) -> Vec<(usize, usize)> {
        let needle = self.as_str();
        let mut out = Vec::new();
        let mut from = 0;
        while let Some(off) = input[from..].find(needle) {
            let start = from + off;
            out.push((start, start + needle.len()));
            from = start + needle.len();
        }
        out
    }
}

/// The `r` argument of a `Regex` position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pattern {
    Token(RegexToken),
    Literal(Delimiter),
}

impl Pattern {
    /// Every pattern: the eight tokens followed by the delimiters.
    pub fn all() -> impl Iterator<Item = Pattern> {
        RegexToken::ALL
            .into_iter()
            .map(Pattern::Token)
            .chain(Delimiter::all().map(Pattern::Literal))
    }

    pub fn matches(self, input: &str) -> Vec<(usize, usize)> {
        match self {
            Pattern::Token(t) => t.matches(input),
            Pattern::Literal(d) => d.matches(input),
        }
    }
}

/// Matches for a token or delimiter, sorted by start and non-overlapping.
pub fn regex_matches(pattern: Pattern, input: &str) -> Vec<(usize, usize)> {
    pattern.matches(input)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Boundary {
    Start,
    End,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Position {
    /// Start or end of the `k`-th match of `pattern`; negative `k` counts from the end.
    Regex {
        pattern: Pattern,
        k: i8,
        boundary: Boundary,
    },
    /// Absolute boundary; negative values count back from `len` (`-1` is `len`).
    ConstPos(i8),
}

impl Position {
    fn in_range(&self) -> bool {
        match *self {
            Position::Regex { k, .. } => k.abs() <= MAX_MATCH_INDEX,
            Position::ConstPos(n) => n.abs() <= MAX_CONST_POS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Expression {
    ConstStr(Delimiter),
    SubStr(Position, Position),
}

impl Expression {
    fn in_range(&self) -> bool {
        match self {
            Expression::ConstStr(_) => true,
            Expression::SubStr(p1, p2) => p1.in_range() && p2.in_range(),
        }
    }
}

/// Reasons a list of expressions is not a valid program.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ProgramError {
    #[error("a program needs between 1 and {MAX_EXPRESSIONS} expressions, got {0}")]
    Length(usize),
    #[error("expression {0} has an integer argument outside the allowed range")]
    OutOfRange(usize),
}

/// `Concat(e_1, ..., e_n)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Program {
    expressions: Vec<Expression>,
}

impl Program {
    pub fn new(expressions: Vec<Expression>) -> Result<Self, ProgramError> {
        if expressions.is_empty() || expressions.len() > MAX_EXPRESSIONS {
            return Err(ProgramError::Length(expressions.len()));
        }
        if let Some(i) = expressions.iter().position(|e| !e.in_range()) {
            return Err(ProgramError::OutOfRange(i));
        }
        Ok(Program { expressions })
    }

    pub fn expressions(&self) -> &[Expression] {
        &self.expressions
    }

    /// Number of top-level expressions.
    pub fn len(&self) -> usize {
        self.expressions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.expressions.is_empty()
    }

    /// Canonical single-line text; `parse(&p.render()) == Ok(p)`.
    pub fn render(&self) -> String {
        self.to_string()
    }

    pub fn execute(&self, input: &str) -> Result<String, ExecError> {
        exec::execute(self, input)
    }
}

pub fn program_length(program: &Program) -> usize {
    program.len()
}

pub fn render(program: &Program) -> String {
    program.render()
}

pub fn execute(program: &Program, input: &str) -> Result<String, ExecError> {
    program.execute(input)
}

fn write_literal(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        if c == '"' || c == '\\' {
            f.write_str("\\")?;
        }
        write!(f, "{c}")?;
    }
    f.write_str("\"")
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Token(t) => f.write_str(t.name()),
            Pattern::Literal(d) => write_literal(f, d.as_str()),
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Start => "Start",
            Boundary::End => "End",
        })
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Position::Regex {
                pattern,
                k,
                boundary,
            } => write!(f, "Regex({pattern}, {k}, {boundary})"),
            Position::ConstPos(n) => write!(f, "ConstPos({n})"),
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expression::ConstStr(d) => {
                f.write_str("ConstStr(")?;
                write_literal(f, d.as_str())?;
                f.write_str(")")
            }
            Expression::SubStr(p1, p2) => write!(f, "SubStr({p1}, {p2})"),
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Concat(")?;
        for (i, e) in self.expressions.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str(")")
    }
}
