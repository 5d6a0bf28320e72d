use super::{Boundary, Expression, Position, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ExecErrorKind {
    /// Fewer than `|k|` matches of the pattern.
    NoSuchMatch,
    /// A constant position resolved outside `[0, len]`.
    PositionOutOfRange,
    /// `SubStr` with `p1 >= p2`.
    EmptyOrInvertedSubstring,
    /// `Regex(_, 0, _)`.
    ZeroMatchIndex,
}

impl std::fmt::Display for ExecErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExecErrorKind::NoSuchMatch => "no such match",
            ExecErrorKind::PositionOutOfRange => "position out of range",
            ExecErrorKind::EmptyOrInvertedSubstring => "empty or inverted substring",
            ExecErrorKind::ZeroMatchIndex => "zero match index",
        })
    }
}

/// Execution failure, tagged with the index of the failing expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, thiserror::Error)]
#[error("{kind} in expression {expression}")]
pub struct ExecError {
    pub kind: ExecErrorKind,
    pub expression: usize,
}

/// Resolves a position expression to a boundary in `[0, input.len()]`.
pub fn eval_position(pos: &Position, input: &str) -> Result<usize, ExecErrorKind> {
    let len = input.len();
    match *pos {
        Position::ConstPos(n) => {
            let n = n as i64;
            let at = if n >= 0 { n } else { len as i64 + n + 1 };
            if (0..=len as i64).contains(&at) {
                Ok(at as usize)
            } else {
                Err(ExecErrorKind::PositionOutOfRange)
            }
        }
        Position::Regex {
            pattern,
            k,
            boundary,
        } => {
            if k == 0 {
                return Err(ExecErrorKind::ZeroMatchIndex);
            }
            let matches = pattern.matches(input);
            let count = k.unsigned_abs() as usize;
            if count > matches.len() {
                return Err(ExecErrorKind::NoSuchMatch);
            }
            let (start, end) = if k > 0 {
                matches[count - 1]
            } else {
                matches[matches.len() - count]
            };
            Ok(match boundary {
                Boundary::Start => start,
                Boundary::End => end,
            })
        }
    }
}

pub(super) fn execute(program: &Program, input: &str) -> Result<String, ExecError> {
    let mut out = String::new();
    for (i, expr) in program.expressions().iter().enumerate() {
        let fail = |kind| ExecError {
            kind,
            expression: i,
        };
        match expr {
            Expression::ConstStr(d) => out.push_str(d.as_str()),
            Expression::SubStr(p1, p2) => {
                let from = eval_position(p1, input).map_err(fail)?;
                let to = eval_position(p2, input).map_err(fail)?;
                if from >= to {
                    return Err(fail(ExecErrorKind::EmptyOrInvertedSubstring));
                }
                // Inputs are ASCII; a non-boundary slice is reported lossily instead of panicking.
                match input.get(from..to) {
                    Some(s) => out.push_str(s),
                    None => out.push_str(&String::from_utf8_lossy(&input.as_bytes()[from..to])),
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse, Pattern, RegexToken};

    fn regex(pattern: Pattern, k: i8, boundary: Boundary) -> Position {
        Position::Regex {
            pattern,
            k,
            boundary,
        }
    }

    #[test]
    fn last_word_start() {
        let p = regex(Pattern::Token(RegexToken::Word), -1, Boundary::Start);
        assert_eq!(eval_position(&p, "Barry M. Myers, 617-278-8787"), Ok(9));
    }

    #[test]
    fn negative_const_pos_counts_from_end() {
        assert_eq!(eval_position(&Position::ConstPos(-1), "abc"), Ok(3));
        assert_eq!(eval_position(&Position::ConstPos(-4), "abc"), Ok(0));
        assert_eq!(
            eval_position(&Position::ConstPos(-5), "abc"),
            Err(ExecErrorKind::PositionOutOfRange)
        );
        assert_eq!(
            eval_position(&Position::ConstPos(4), "abc"),
            Err(ExecErrorKind::PositionOutOfRange)
        );
    }

    #[test]
    fn missing_and_zero_matches() {
        let p = regex(Pattern::Token(RegexToken::Num), 3, Boundary::Start);
        assert_eq!(eval_position(&p, "a1b"), Err(ExecErrorKind::NoSuchMatch));
        let z = regex(Pattern::Token(RegexToken::Num), 0, Boundary::Start);
        assert_eq!(eval_position(&z, "a1b"), Err(ExecErrorKind::ZeroMatchIndex));
    }

    #[test]
    fn initials_program_outputs() {
        let p = parse(
            r#"Concat(SubStr(ConstPos(0), ConstPos(1)),
                      ConstStr(". "),
                      SubStr(Regex(Word, -1, Start), Regex(",", 1, Start)),
                      ConstStr(" : "),
                      SubStr(Regex(Num, 1, Start), Regex("-", 1, Start)))"#,
        )
        .unwrap();
        assert_eq!(p.execute("Mark Henry, 521-625-2716").unwrap(), "M. Henry : 521");
        assert_eq!(p.execute("Barry M. Myers, 617-278-8787").unwrap(), "B. Myers : 617");
    }

    #[test]
    fn second_word_variant_on_three_word_name() {
        let p = parse(
            r#"Concat(SubStr(ConstPos(0), ConstPos(1)), ConstStr(". "),
                      SubStr(Regex(Word, 2, Start), Regex(",", 1, Start)), ConstStr(" : "),
                      SubStr(Regex(Num, 1, Start), Regex("-", 1, Start)))"#,
        )
        .unwrap();
        assert_eq!(p.execute("Barry M. Myers, 617-278-8787").unwrap(), "B. M. Myers : 617");
        assert_eq!(p.execute("Mark Henry, 521-625-2716").unwrap(), "M. Henry : 521");
    }

    #[test]
    fn inverted_substring_is_an_error() {
        let p = parse("Concat(ConstStr(\",\"), SubStr(ConstPos(2), ConstPos(2)))").unwrap();
        assert_eq!(
            p.execute("abc"),
            Err(ExecError {
                kind: ExecErrorKind::EmptyOrInvertedSubstring,
                expression: 1
            })
        );
    }

    #[test]
    fn constant_program_ignores_input() {
        let p = parse("Concat(ConstStr(\". \"))").unwrap();
        assert_eq!(p.execute("").unwrap(), ". ");
        assert_eq!(p.execute("anything at all").unwrap(), ". ");
    }
}
