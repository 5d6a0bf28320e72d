use super::{
    Boundary, Delimiter, Expression, Pattern, Position, Program, RegexToken, MAX_CONST_POS,
    MAX_EXPRESSIONS, MAX_MATCH_INDEX,
};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("parse error at byte {offset}: expected {expected}, found {found}")]
pub struct ParseError {
    pub offset: usize,
    pub expected: String,
    pub found: String,
}

/// Parses the function-call surface syntax, e.g.
/// `Concat(SubStr(ConstPos(0), ConstPos(1)), ConstStr(". "))`.
pub fn parse(text: &str) -> Result<Program, ParseError> {
    let mut p = Parser { src: text, pos: 0 };
    let program = p.program()?;
    p.skip_ws();
    if p.pos < text.len() {
        return Err(p.error("end of input"));
    }
    Ok(program)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, expected: impl Into<String>) -> ParseError {
        let rest = &self.src[self.pos..];
        let found = match rest.chars().next() {
            None => "end of input".to_string(),
            Some(_) => {
                let snippet: String = rest.chars().take(12).collect();
                format!("{snippet:?}")
            }
        };
        ParseError {
            offset: self.pos,
            expected: expected.into(),
            found,
        }
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.as_bytes().get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("'{}'", c as char)))
        }
    }

    fn ident(&mut self) -> Option<(usize, &'a str)> {
        self.skip_ws();
        let start = self.pos;
        let len = self.src[start..]
            .bytes()
            .take_while(|b| b.is_ascii_alphanumeric() || *b == b'_')
            .count();
        if len == 0 {
            return None;
        }
        self.pos += len;
        Some((start, &self.src[start..start + len]))
    }

    fn keyword(&mut self, options: &[&str]) -> Result<&'a str, ParseError> {
        let expected = || options.join(" or ");
        let save = self.pos;
        match self.ident() {
            Some((_, word)) if options.contains(&word) => Ok(word),
            _ => {
                self.pos = save;
                self.skip_ws();
                Err(self.error(expected()))
            }
        }
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        self.keyword(&["Concat"])?;
        self.expect(b'(')?;
        let mut exprs = vec![self.expression()?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            if exprs.len() == MAX_EXPRESSIONS {
                return Err(self.error(format!("')' (at most {MAX_EXPRESSIONS} expressions)")));
            }
            exprs.push(self.expression()?);
        }
        self.expect(b')')?;
        Ok(Program::new(exprs).expect("expression count and ranges checked while parsing"))
    }

    fn expression(&mut self) -> Result<Expression, ParseError> {
        match self.keyword(&["ConstStr", "SubStr"])? {
            "ConstStr" => {
                self.expect(b'(')?;
                let d = self.delimiter()?;
                self.expect(b')')?;
                Ok(Expression::ConstStr(d))
            }
            _ => {
                self.expect(b'(')?;
                let p1 = self.position()?;
                self.expect(b',')?;
                let p2 = self.position()?;
                self.expect(b')')?;
                Ok(Expression::SubStr(p1, p2))
            }
        }
    }

    fn position(&mut self) -> Result<Position, ParseError> {
        match self.keyword(&["Regex", "ConstPos"])? {
            "ConstPos" => {
                self.expect(b'(')?;
                let n = self.integer(MAX_CONST_POS)?;
                self.expect(b')')?;
                Ok(Position::ConstPos(n))
            }
            _ => {
                self.expect(b'(')?;
                let pattern = if self.peek() == Some(b'"') {
                    Pattern::Literal(self.delimiter()?)
                } else {
                    let save = self.pos;
                    match self.ident().and_then(|(_, w)| RegexToken::from_name(w)) {
                        Some(t) => Pattern::Token(t),
                        None => {
                            self.pos = save;
                            return Err(self.error("a regex token or quoted delimiter"));
                        }
                    }
                };
                self.expect(b',')?;
                let k = self.integer(MAX_MATCH_INDEX)?;
                self.expect(b',')?;
                let boundary = match self.keyword(&["Start", "End"])? {
                    "Start" => Boundary::Start,
                    _ => Boundary::End,
                };
                self.expect(b')')?;
                Ok(Position::Regex {
                    pattern,
                    k,
                    boundary,
                })
            }
        }
    }

    fn integer(&mut self, bound: i8) -> Result<i8, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        if bytes.get(end) == Some(&b'-') {
            end += 1;
        }
        let digits = bytes[end..].iter().take_while(|b| b.is_ascii_digit()).count();
        let expected = format!("an integer in [-{bound}, {bound}]");
        if digits == 0 {
            return Err(self.error(expected));
        }
        end += digits;
        match self.src[start..end].parse::<i64>() {
            Ok(v) if v.abs() <= bound as i64 => {
                self.pos = end;
                Ok(v as i8)
            }
            _ => Err(self.error(expected)),
        }
    }

    fn delimiter(&mut self) -> Result<Delimiter, ParseError> {
        let start = {
            self.skip_ws();
            self.pos
        };
        self.expect(b'"')?;
        let mut value = String::new();
        let mut chars = self.src[self.pos..].char_indices();
        loop {
            match chars.next() {
                None => {
                    self.pos = self.src.len();
                    return Err(self.error("closing '\"'"));
                }
                Some((i, '"')) => {
                    self.pos += i + 1;
                    break;
                }
                Some((_, '\\')) => match chars.next() {
                    Some((_, c)) => value.push(c),
                    None => {
                        self.pos = self.src.len();
                        return Err(self.error("an escaped character"));
                    }
                },
                Some((_, c)) => value.push(c),
            }
        }
        Delimiter::from_literal(&value).ok_or_else(|| {
            self.pos = start;
            self.error("a delimiter from the constant vocabulary")
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const INITIALS: &str = r#"Concat(SubStr(ConstPos(0), ConstPos(1)),
       ConstStr(". "),
       SubStr(Regex(Word, -1, Start),
              Regex(",", 1, Start)),
       ConstStr(" : "),
       SubStr(Regex(Num, 1, Start),
              Regex("-", 1, Start)))"#;

    #[test]
    fn initials_program_has_five_expressions() {
        let p = parse(INITIALS).unwrap();
        assert_eq!(p.len(), 5);
        let again = parse(&p.render()).unwrap();
        assert_eq!(again, p);
        assert_eq!(again.render(), p.render());
    }

    #[test]
    fn minimal_program() {
        let p = parse("Concat(ConstStr(\". \"))").unwrap();
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn empty_concat_rejected() {
        let err = parse("Concat()").unwrap_err();
        assert_eq!(err.offset, 7);
        assert!(err.expected.contains("ConstStr"), "{err}");
    }

    #[test]
    fn too_many_expressions() {
        let e = "ConstStr(\",\")";
        let text = format!("Concat({})", vec![e; 11].join(", "));
        assert!(parse(&text).is_err());
        let text = format!("Concat({})", vec![e; 10].join(", "));
        assert_eq!(parse(&text).unwrap().len(), 10);
    }

    #[test]
    fn integer_ranges() {
        assert!(parse("Concat(SubStr(Regex(Word, 0, Start), ConstPos(-10)))").is_ok());
        let err = parse("Concat(SubStr(Regex(Word, 6, Start), ConstPos(1)))").unwrap_err();
        assert_eq!(err.offset, 26);
        assert!(parse("Concat(SubStr(ConstPos(11), ConstPos(1)))").is_err());
        assert!(parse("Concat(SubStr(ConstPos(-0), ConstPos(1)))").is_ok());
    }

    #[test]
    fn unknown_literal_and_token() {
        let err = parse("Concat(ConstStr(\"xyz\"))").unwrap_err();
        assert_eq!(err.offset, 16);
        assert!(parse("Concat(SubStr(Regex(Words, 1, Start), ConstPos(1)))").is_err());
        assert!(parse("Concat(ConstStr(\",)").is_err());
    }

    #[test]
    fn trailing_garbage_rejected() {
        let err = parse("Concat(ConstStr(\",\")) x").unwrap_err();
        assert_eq!(err.offset, 22);
    }

    #[test]
    fn escaped_quote_is_read_but_outside_vocabulary() {
        let err = parse(r#"Concat(ConstStr("\""))"#).unwrap_err();
        assert!(err.expected.contains("vocabulary"));
    }
}
