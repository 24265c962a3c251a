//! Lexer and recursive-descent parser for BECAUSE queries.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{Comparator, KpiAtom, Predicate, QueryAst, QueryOptions, Select, Sign};

/// A parse failure at a 1-based line and column.
#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[error("line {line}, column {col}: expected {}, found {found}", describe_expected(.expected))]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub expected: Vec<String>,
    pub found: String,
}

fn describe_expected(expected: &[String]) -> String {
    match expected {
        [] => "nothing".into(),
        [one] => one.clone(),
        [init @ .., last] => format!("one of {} or {last}", init.join(", ")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kw {
    Select,
    From,
    Where,
    Because,
    Or,
    And,
    Rising,
    Falling,
    With,
    Bandwidth,
    Delta,
    Alpha,
}

const KEYWORDS: [(&str, Kw); 12] = [
    ("SELECT", Kw::Select),
    ("FROM", Kw::From),
    ("WHERE", Kw::Where),
    ("BECAUSE", Kw::Because),
    ("OR", Kw::Or),
    ("AND", Kw::And),
    ("RISING", Kw::Rising),
    ("FALLING", Kw::Falling),
    ("WITH", Kw::With),
    ("BANDWIDTH", Kw::Bandwidth),
    ("DELTA", Kw::Delta),
    ("ALPHA", Kw::Alpha),
];

impl Kw {
    fn lookup(word: &str) -> Option<Kw> {
        KEYWORDS.iter().find(|(k, _)| k.eq_ignore_ascii_case(word)).map(|&(_, kw)| kw)
    }

    fn text(self) -> &'static str {
        KEYWORDS.iter().find(|(_, k)| *k == self).map(|(t, _)| *t).expect("every keyword is listed")
    }
}

/// True for `[A-Za-z_][A-Za-z0-9_]*` words that are not reserved keywords.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && Kw::lookup(s).is_none()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Kw(Kw),
    Ident(String),
    Number { value: f64, integral: bool, text: String },
    Star,
    Comma,
    Cmp(Comparator),
    Invalid(String),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Kw(k) => write!(f, "`{}`", k.text()),
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Number { text, .. } => write!(f, "number `{text}`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Cmp(c) => write!(f, "`{}`", c.symbol()),
            Tok::Invalid(s) => write!(f, "invalid character `{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let start = i;
        let next = chars.get(i + 1).copied();
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            Kw::lookup(&word).map_or(Tok::Ident(word), Tok::Kw)
        } else if c.is_ascii_digit() || (c == '-' && next.is_some_and(|n| n.is_ascii_digit())) {
            i += 1;
            let digits = |i: &mut usize| {
                let s = *i;
                while *i < chars.len() && chars[*i].is_ascii_digit() {
                    *i += 1;
                }
                *i > s
            };
            digits(&mut i);
            let mut integral = true;
            if chars.get(i) == Some(&'.') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                i += 1;
                digits(&mut i);
                integral = false;
            }
            if matches!(chars.get(i), Some('e' | 'E')) {
                let mut j = i + 1;
                if matches!(chars.get(j), Some('+' | '-')) {
                    j += 1;
                }
                if digits(&mut j) {
                    i = j;
                    integral = false;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value = text.parse().expect("lexer accepts only valid numbers");
            Tok::Number { value, integral, text }
        } else {
            i += 1;
            match (c, next) {
                ('*', _) => Tok::Star,
                (',', _) => Tok::Comma,
                ('=', _) => Tok::Cmp(Comparator::Eq),
                ('!', Some('=')) => {
                    i += 1;
                    Tok::Cmp(Comparator::Ne)
                }
                ('<', Some('=')) => {
                    i += 1;
                    Tok::Cmp(Comparator::Le)
                }
                ('>', Some('=')) => {
                    i += 1;
                    Tok::Cmp(Comparator::Ge)
                }
                ('<', _) => Tok::Cmp(Comparator::Lt),
                ('>', _) => Tok::Cmp(Comparator::Gt),
                _ => Tok::Invalid(c.to_string()),
            }
        };
        out.push(Token { tok, line, col });
        col += i - start;
    }
    out.push(Token { tok: Tok::Eof, line, col });
    out
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

const IDENT: &str = "identifier";
const NUMBER: &str = "number";
const END: &str = "end of input";

fn kw(k: Kw) -> String {
    format!("`{}`", k.text())
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[String]) -> SyntaxError {
        let t = self.peek();
        SyntaxError { line: t.line, col: t.col, expected: expected.to_vec(), found: t.tok.to_string() }
    }

    fn eat_kw(&mut self, k: Kw) -> bool {
        if self.peek().tok == Tok::Kw(k) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, k: Kw) -> Result<(), SyntaxError> {
        if self.eat_kw(k) { Ok(()) } else { Err(self.error(&[kw(k)])) }
    }

    fn ident(&mut self, also: &[String]) -> Result<String, SyntaxError> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => {
                let mut exp = vec![IDENT.to_string()];
                exp.extend_from_slice(also);
                Err(self.error(&exp))
            }
        }
    }

    fn number(&mut self) -> Result<(f64, bool), SyntaxError> {
        match self.peek().tok {
            Tok::Number { value, integral, .. } => {
                self.bump();
                Ok((value, integral))
            }
            _ => Err(self.error(&[NUMBER.into()])),
        }
    }

    fn query(&mut self) -> Result<QueryAst, SyntaxError> {
        self.expect_kw(Kw::Select)?;
        let select = if self.peek().tok == Tok::Star {
            self.bump();
            Select::All
        } else {
            let mut cols = vec![self.ident(&["`*`".into()])?];
            while self.peek().tok == Tok::Comma {
                self.bump();
                cols.push(self.ident(&[])?);
            }
            Select::Columns(cols)
        };
        let after_select =
            if matches!(select, Select::All) { vec![kw(Kw::From)] } else { vec!["`,`".into(), kw(Kw::From)] };
        if !self.eat_kw(Kw::From) {
            return Err(self.error(&after_select));
        }
        let source = self.ident(&[])?;
        self.expect_kw(Kw::Where)?;
        let metric = self.ident(&[])?;
        let cmp = match self.peek().tok {
            Tok::Cmp(c) => {
                self.bump();
                c
            }
            _ => return Err(self.error(&Comparator::ALL.map(|c| format!("`{}`", c.symbol())))),
        };
        let (value, _) = self.number()?;
        self.expect_kw(Kw::Because)?;

        let mut because = Vec::new();
        let mut last_signed;
        loop {
            let mut conj = Vec::new();
            loop {
                let name = self.ident(&[])?;
                let sign = if self.eat_kw(Kw::Rising) {
                    Sign::Rising
                } else if self.eat_kw(Kw::Falling) {
                    Sign::Falling
                } else {
                    Sign::Any
                };
                last_signed = sign != Sign::Any;
                conj.push(KpiAtom { kpi: name, sign });
                if !self.eat_kw(Kw::And) {
                    break;
                }
            }
            because.push(conj);
            if !self.eat_kw(Kw::Or) {
                break;
            }
        }

        let mut options = QueryOptions::default();
        let has_with = self.eat_kw(Kw::With);
        if has_with {
            loop {
                self.option(&mut options)?;
                if self.peek().tok != Tok::Comma {
                    break;
                }
                self.bump();
            }
        }
        if self.peek().tok != Tok::Eof {
            let mut exp = Vec::new();
            if has_with {
                exp.push("`,`".to_string());
            } else {
                if !last_signed {
                    exp.extend([kw(Kw::Rising), kw(Kw::Falling)]);
                }
                exp.extend([kw(Kw::And), kw(Kw::Or), kw(Kw::With)]);
            }
            exp.push(END.into());
            return Err(self.error(&exp));
        }
        Ok(QueryAst { select, source, predicate: Predicate { metric, cmp, value }, because, options })
    }

    fn option(&mut self, options: &mut QueryOptions) -> Result<(), SyntaxError> {
        let names = [Kw::Bandwidth, Kw::Delta, Kw::Alpha];
        let free: Vec<String> = names
            .iter()
            .filter(|&&k| match k {
                Kw::Bandwidth => options.bandwidth.is_none(),
                Kw::Delta => options.delta.is_none(),
                _ => options.alpha.is_none(),
            })
            .map(|&k| kw(k))
            .collect();
        let key = match self.peek().tok {
            Tok::Kw(k) if names.contains(&k) && free.contains(&kw(k)) => k,
            _ => return Err(self.error(&free)),
        };
        self.bump();
        if self.peek().tok != Tok::Cmp(Comparator::Eq) {
            return Err(self.error(&["`=`".into()]));
        }
        self.bump();
        let at = self.pos;
        let (value, integral) = self.number()?;
        let reject = |p: &Parser, what: &str| {
            let t = &p.tokens[at];
            Err(SyntaxError { line: t.line, col: t.col, expected: vec![what.into()], found: t.tok.to_string() })
        };
        match key {
            Kw::Bandwidth if integral && (2.0..=1e9).contains(&value) => options.bandwidth = Some(value as usize),
            Kw::Bandwidth => return reject(self, "an integer bandwidth of at least 2"),
            Kw::Delta if integral && (0.0..=1e9).contains(&value) => options.delta = Some(value as usize),
            Kw::Delta => return reject(self, "a non-negative integer delta"),
            _ if value > 0.0 && value <= 1.0 => options.alpha = Some(value),
            _ => return reject(self, "an alpha in (0, 1]"),
        }
        Ok(())
    }
}

pub fn parse(text: &str) -> Result<QueryAst, SyntaxError> {
    Parser { tokens: lex(text), pos: 0 }.query()
}
