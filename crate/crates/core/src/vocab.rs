//! Program linearization and character encoding.
//!
//! Programs are written out in pre-order: a constructor token followed by its
//! arguments, with `EOS` after the last expression. No brackets are needed
//! because every constructor has a fixed arity.
//!
//! ```text
//! Concat(ConstStr(". "))  ->  ConstStr ". " <eos>
//! SubStr(Regex(Word, -1, Start), ConstPos(3))  ->  SubStr Regex Word -1 Start ConstPos 3
//! ```

use crate::dsl::{
    Boundary, Delimiter, Expression, Pattern, Position, Program, RegexToken, DELIMITERS,
    MAX_CONST_POS, MAX_EXPRESSIONS, MAX_MATCH_INDEX, MAX_STRING_LEN,
};

/// Longest decoder sequence, `EOS` included.
pub const T_MAX: usize = 128;

pub type TokenId = u16;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
const CONST_STR: TokenId = 3;
const SUB_STR: TokenId = 4;
const REGEX: TokenId = 5;
const CONST_POS: TokenId = 6;
const START: TokenId = 7;
const END: TokenId = 8;
const FIRST_REGEX_TOKEN: TokenId = 9;
const FIRST_DELIMITER: TokenId = FIRST_REGEX_TOKEN + RegexToken::ALL.len() as TokenId;
const FIRST_INTEGER: TokenId = FIRST_DELIMITER + DELIMITERS.len() as TokenId;
/// Integers `-L..=L` share one block; `Regex` indices use the `-K..=K` sub-range.
const INTEGER_SPAN: TokenId = 2 * MAX_CONST_POS as TokenId + 1;

/// Number of program tokens.
pub const TOKEN_VOCAB_SIZE: usize = (FIRST_INTEGER + INTEGER_SPAN) as usize;

/// A linearized program as token ids (without the leading `BOS`).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenSeq(pub Vec<TokenId>);

impl TokenSeq {
    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Human-readable name of a token id; the full listing is stored in checkpoints.
pub fn token_name(id: TokenId) -> String {
    match id {
        PAD => "<pad>".into(),
        BOS => "<bos>".into(),
        EOS => "<eos>".into(),
        CONST_STR => "ConstStr".into(),
        SUB_STR => "SubStr".into(),
        REGEX => "Regex".into(),
        CONST_POS => "ConstPos".into(),
        START => "Start".into(),
        END => "End".into(),
        id if id < FIRST_DELIMITER => RegexToken::ALL[(id - FIRST_REGEX_TOKEN) as usize]
            .name()
            .into(),
        id if id < FIRST_INTEGER => format!("{:?}", DELIMITERS[(id - FIRST_DELIMITER) as usize]),
        id if (id as usize) < TOKEN_VOCAB_SIZE => {
            (id as i32 - FIRST_INTEGER as i32 - MAX_CONST_POS as i32).to_string()
        }
        _ => format!("<unk:{id}>"),
    }
}

/// All token names in id order.
pub fn token_listing() -> Vec<String> {
    (0..TOKEN_VOCAB_SIZE as TokenId).map(token_name).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum VocabError {
    #[error("sequence of {0} tokens exceeds the limit of {T_MAX}")]
    SequenceTooLong(usize),
    #[error("string of {len} characters exceeds width {width}")]
    StringTooLong { len: usize, width: usize },
    #[error("character {0:?} is not printable ASCII")]
    InvalidCharacter(char),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("cannot decode token sequence at position {position}: {reason}")]
pub struct DecodeError {
    pub position: usize,
    pub reason: &'static str,
}

fn integer_token(v: i8) -> TokenId {
    FIRST_INTEGER + (v as i16 + MAX_CONST_POS as i16) as TokenId
}

fn pattern_token(p: Pattern) -> TokenId {
    match p {
        Pattern::Token(t) => FIRST_REGEX_TOKEN + t as TokenId,
        Pattern::Literal(d) => FIRST_DELIMITER + d.index() as TokenId,
    }
}

fn push_position(out: &mut Vec<TokenId>, pos: &Position) {
    match *pos {
        Position::Regex {
            pattern,
            k,
            boundary,
        } => {
            out.push(REGEX);
            out.push(pattern_token(pattern));
            out.push(integer_token(k));
            out.push(match boundary {
                Boundary::Start => START,
                Boundary::End => END,
            });
        }
        Position::ConstPos(n) => {
            out.push(CONST_POS);
            out.push(integer_token(n));
        }
    }
}

pub fn program_to_tokens(program: &Program) -> Result<TokenSeq, VocabError> {
    let mut out = Vec::with_capacity(9 * program.len() + 1);
    for e in program.expressions() {
        match e {
            Expression::ConstStr(d) => {
                out.push(CONST_STR);
                out.push(FIRST_DELIMITER + d.index() as TokenId);
            }
            Expression::SubStr(p1, p2) => {
                out.push(SUB_STR);
                push_position(&mut out, p1);
                push_position(&mut out, p2);
            }
        }
    }
    out.push(EOS);
    if out.len() > T_MAX {
        return Err(VocabError::SequenceTooLong(out.len()));
    }
    Ok(TokenSeq(out))
}

struct Reader<'a> {
    ids: &'a [TokenId],
    at: usize,
}

impl Reader<'_> {
    fn fail(&self, reason: &'static str) -> DecodeError {
        DecodeError {
            position: self.at,
            reason,
        }
    }

    fn next(&mut self) -> Result<TokenId, DecodeError> {
        let id = *self.ids.get(self.at).ok_or(self.fail("truncated sequence"))?;
        self.at += 1;
        Ok(id)
    }

    fn integer(&mut self, bound: i8) -> Result<i8, DecodeError> {
        let id = self.next()?;
        if !(FIRST_INTEGER..FIRST_INTEGER + INTEGER_SPAN).contains(&id) {
            self.at -= 1;
            return Err(self.fail("expected an integer"));
        }
        let v = (id - FIRST_INTEGER) as i8 - MAX_CONST_POS;
        if v.abs() > bound {
            self.at -= 1;
            return Err(self.fail("integer out of range"));
        }
        Ok(v)
    }

    fn delimiter(&mut self) -> Result<Delimiter, DecodeError> {
        let id = self.next()?;
        if (FIRST_DELIMITER..FIRST_INTEGER).contains(&id) {
            Ok(Delimiter::from_index((id - FIRST_DELIMITER) as usize).unwrap())
        } else {
            self.at -= 1;
            Err(self.fail("expected a delimiter"))
        }
    }

    fn position(&mut self) -> Result<Position, DecodeError> {
        match self.next()? {
            CONST_POS => Ok(Position::ConstPos(self.integer(MAX_CONST_POS)?)),
            REGEX => {
                let id = self.next()?;
                let pattern = if (FIRST_REGEX_TOKEN..FIRST_DELIMITER).contains(&id) {
                    Pattern::Token(RegexToken::ALL[(id - FIRST_REGEX_TOKEN) as usize])
                } else if (FIRST_DELIMITER..FIRST_INTEGER).contains(&id) {
                    Pattern::Literal(Delimiter::from_index((id - FIRST_DELIMITER) as usize).unwrap())
                } else {
                    self.at -= 1;
                    return Err(self.fail("expected a regex token or delimiter"));
                };
                let k = self.integer(MAX_MATCH_INDEX)?;
                let boundary = match self.next()? {
                    START => Boundary::Start,
                    END => Boundary::End,
                    _ => {
                        self.at -= 1;
                        return Err(self.fail("expected Start or End"));
                    }
                };
                Ok(Position::Regex {
                    pattern,
                    k,
                    boundary,
                })
            }
            _ => {
                self.at -= 1;
                Err(self.fail("expected Regex or ConstPos"))
            }
        }
    }
}

/// Inverse of [`program_to_tokens`]; any other sequence is a [`DecodeError`].
pub fn tokens_to_program(seq: &TokenSeq) -> Result<Program, DecodeError> {
    let mut r = Reader {
        ids: &seq.0,
        at: 0,
    };
    let mut exprs = Vec::new();
    loop {
        let expr = match r.next()? {
            EOS => break,
            _ if exprs.len() == MAX_EXPRESSIONS => {
                r.at -= 1;
                return Err(r.fail("too many expressions"));
            }
            CONST_STR => Expression::ConstStr(r.delimiter()?),
            SUB_STR => {
                let p1 = r.position()?;
                let p2 = r.position()?;
                Expression::SubStr(p1, p2)
            }
            _ => {
                r.at -= 1;
                return Err(r.fail("expected ConstStr, SubStr or EOS"));
            }
        };
        exprs.push(expr);
    }
    if r.at != seq.0.len() {
        return Err(r.fail("tokens after EOS"));
    }
    if exprs.is_empty() {
        return Err(DecodeError {
            position: 0,
            reason: "empty program",
        });
    }
    Ok(Program::new(exprs).expect("ranges checked while decoding"))
}

pub type CharId = u8;

pub const CHAR_PAD: CharId = 0;
/// Placeholder for the executed-output slot before any program has run.
pub const CHAR_DUMMY: CharId = 1;
/// Marks an executed output that failed (decode or execution error).
pub const CHAR_FAIL: CharId = 2;
const FIRST_PRINTABLE: CharId = 3;
pub const CHAR_VOCAB_SIZE: usize = FIRST_PRINTABLE as usize + (0x7E - 0x20 + 1);

/// Width of one encoded string.
pub const STRING_WIDTH: usize = MAX_STRING_LEN;
/// Width of an encoded (input, output, executed output) triplet.
pub const TRIPLET_WIDTH: usize = 3 * STRING_WIDTH;

pub fn char_id(c: char) -> Result<CharId, VocabError> {
    if (' '..='~').contains(&c) {
        Ok(FIRST_PRINTABLE + (c as u8 - b' '))
    } else {
        Err(VocabError::InvalidCharacter(c))
    }
}

pub fn char_listing() -> Vec<String> {
    let mut out = vec!["<pad>".to_string(), "<dummy>".into(), "<fail>".into()];
    out.extend((b' '..=b'~').map(|b| (b as char).to_string()));
    out
}

fn encode_into(s: &str, out: &mut [CharId]) -> Result<(), VocabError> {
    let width = out.len();
    let mut n = 0;
    for c in s.chars() {
        if n == width {
            return Err(VocabError::StringTooLong {
                len: s.chars().count(),
                width,
            });
        }
        out[n] = char_id(c)?;
        n += 1;
    }
    out[n..].fill(CHAR_PAD);
    Ok(())
}

/// Character ids right-padded with `PAD` to exactly `width`.
pub fn encode_string(s: &str, width: usize) -> Result<Vec<CharId>, VocabError> {
    let mut out = vec![CHAR_PAD; width];
    encode_into(s, &mut out)?;
    Ok(out)
}

/// Contents of the third triplet slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Executed<'a> {
    Dummy,
    Fail,
    Output(&'a str),
}

/// `[input | output | executed]`, each block [`STRING_WIDTH`] wide.
///
/// Executed outputs come from arbitrary candidate programs and may exceed the
/// width; they are truncated rather than rejected.
pub fn encode_triplet(
    input: &str,
    output: &str,
    executed: Executed<'_>,
) -> Result<Vec<CharId>, VocabError> {
    let mut out = vec![CHAR_PAD; TRIPLET_WIDTH];
    let (a, rest) = out.split_at_mut(STRING_WIDTH);
    let (b, c) = rest.split_at_mut(STRING_WIDTH);
    encode_into(input, a)?;
    encode_into(output, b)?;
    match executed {
        Executed::Dummy => c.fill(CHAR_DUMMY),
        Executed::Fail => c[0] = CHAR_FAIL,
        Executed::Output(s) => {
            for (slot, ch) in c.iter_mut().zip(s.chars()) {
                *slot = char_id(ch)?;
            }
        }
    }
    Ok(out)
}
