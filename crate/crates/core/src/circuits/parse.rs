use thiserror::Error;

use super::Formula;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("unexpected character {found:?} at position {pos}")]
    Unexpected { pos: usize, found: char },
    #[error("unexpected end of formula")]
    Eof,
    #[error("bad variable at position {pos}")]
    BadVariable { pos: usize },
    #[error("trailing input at position {pos}")]
    Trailing { pos: usize },
    #[error("unknown operator {op:?} at position {pos}")]
    UnknownOperator { pos: usize, op: String },
}

struct Cursor<'a> {
    chars: Vec<(usize, char)>,
    at: usize,
    _src: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            chars: src.char_indices().collect(),
            at: 0,
            _src: src,
        }
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.at).is_some_and(|(_, c)| c.is_whitespace()) {
            self.at += 1;
        }
    }

    fn peek(&mut self) -> Option<(usize, char)> {
        self.skip_ws();
        self.chars.get(self.at).copied()
    }

    fn bump(&mut self) -> Option<(usize, char)> {
        let c = self.peek();
        if c.is_some() {
            self.at += 1;
        }
        c
    }

    fn expect(&mut self, want: char) -> Result<(), ParseError> {
        match self.bump() {
            Some((_, c)) if c == want => Ok(()),
            Some((pos, found)) => Err(ParseError::Unexpected { pos, found }),
            None => Err(ParseError::Eof),
        }
    }

    fn word(&mut self) -> String {
        self.skip_ws();
        let mut out = String::new();
        while let Some(&(_, c)) = self.chars.get(self.at) {
            if c.is_ascii_alphanumeric() {
                out.push(c);
                self.at += 1;
            } else {
                break;
            }
        }
        out
    }

    fn variable(&mut self) -> Result<Formula, ParseError> {
        let (pos, _) = self.bump().ok_or(ParseError::Eof)?;
        let digits = self.word();
        match digits.parse::<usize>() {
            Ok(i) if i >= 1 && digits.chars().all(|c| c.is_ascii_digit()) => Ok(Formula::Var(i)),
            _ => Err(ParseError::BadVariable { pos }),
        }
    }

    fn finish(&mut self, f: Formula) -> Result<Formula, ParseError> {
        match self.peek() {
            None => Ok(f),
            Some((pos, _)) => Err(ParseError::Trailing { pos }),
        }
    }
}

pub(super) fn parse_infix(src: &str) -> Result<Formula, ParseError> {
    let mut cur = Cursor::new(src);
    let f = infix_or(&mut cur)?;
    cur.finish(f)
}

fn infix_or(cur: &mut Cursor<'_>) -> Result<Formula, ParseError> {
    let mut terms = vec![infix_and(cur)?];
    while matches!(cur.peek(), Some((_, '|'))) {
        cur.bump();
        terms.push(infix_and(cur)?);
    }
    Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Formula::Or(terms) })
}

fn infix_and(cur: &mut Cursor<'_>) -> Result<Formula, ParseError> {
    let mut terms = vec![infix_unary(cur)?];
    while matches!(cur.peek(), Some((_, '&'))) {
        cur.bump();
        terms.push(infix_unary(cur)?);
    }
    Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Formula::And(terms) })
}

fn infix_unary(cur: &mut Cursor<'_>) -> Result<Formula, ParseError> {
    match cur.peek() {
        Some((_, '!')) => {
            cur.bump();
            Ok(Formula::not(infix_unary(cur)?))
        }
        Some((_, '(')) => {
            cur.bump();
            let inner = infix_or(cur)?;
            cur.expect(')')?;
            Ok(inner)
        }
        Some((_, 'x')) => cur.variable(),
        Some((_, '0')) => {
            cur.bump();
            Ok(Formula::Const(false))
        }
        Some((_, '1')) => {
            cur.bump();
            Ok(Formula::Const(true))
        }
        Some((pos, found)) => Err(ParseError::Unexpected { pos, found }),
        None => Err(ParseError::Eof),
    }
}

pub(super) fn parse_prefix(src: &str) -> Result<Formula, ParseError> {
    let mut cur = Cursor::new(src);
    let f = prefix_term(&mut cur)?;
    cur.finish(f)
}

fn prefix_term(cur: &mut Cursor<'_>) -> Result<Formula, ParseError> {
    match cur.peek() {
        Some((_, '(')) => {
            cur.bump();
            let (pos, _) = cur.peek().ok_or(ParseError::Eof)?;
            let op = cur.word();
            let mut args = Vec::new();
            while !matches!(cur.peek(), Some((_, ')')) | None) {
                args.push(prefix_term(cur)?);
            }
            cur.expect(')')?;
            match op.as_str() {
                "and" => Ok(Formula::And(args)),
                "or" => Ok(Formula::Or(args)),
                "not" if args.len() == 1 => Ok(Formula::not(args.pop().unwrap())),
                _ => Err(ParseError::UnknownOperator { pos, op }),
            }
        }
        Some((_, 'x')) => cur.variable(),
        Some((_, '0')) => {
            cur.bump();
            Ok(Formula::Const(false))
        }
        Some((_, '1')) => {
            cur.bump();
            Ok(Formula::Const(true))
        }
        Some((pos, found)) => Err(ParseError::Unexpected { pos, found }),
        None => Err(ParseError::Eof),
    }
}
