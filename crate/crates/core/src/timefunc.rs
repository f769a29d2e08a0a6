//! Scalar functions of time used as entries of the time-varying matrices.
//!
//! An expression is a sum of constants and harmonics, e.g.
//! `5.2 + cos(2*t) + 0.5*sin(t)`. Grammar (whitespace insignificant):
//!
//! ```text
//! expr   := ['+'|'-'] term (('+'|'-') term)*
//! term   := number | number '*' trig | trig
//! trig   := ('sin'|'cos') '(' [number ['*']] 't' [('+'|'-') number] ')'
//! ```
//!
//! Only `.` is accepted as the decimal separator. Products of harmonics and
//! nested expressions are rejected.

use std::fmt;
use std::ops::Add;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trig {
    Sin,
    Cos,
}

impl Trig {
    fn name(self) -> &'static str {
        match self {
            Trig::Sin => "sin",
            Trig::Cos => "cos",
        }
    }
}

/// One additive term of a [`TimeExpr`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    Const(f64),
    /// `amplitude * kind(angular_frequency * t + phase)`, frequency in rad/s.
    Harmonic {
        kind: Trig,
        amplitude: f64,
        angular_frequency: f64,
        phase: f64,
    },
}

impl Term {
    pub fn sin(amplitude: f64, angular_frequency: f64) -> Self {
        Term::Harmonic {
            kind: Trig::Sin,
            amplitude,
            angular_frequency,
            phase: 0.0,
        }
    }

    pub fn cos(amplitude: f64, angular_frequency: f64) -> Self {
        Term::Harmonic {
            kind: Trig::Cos,
            amplitude,
            angular_frequency,
            phase: 0.0,
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Term::Const(c) => c,
            Term::Harmonic {
                kind: Trig::Sin,
                amplitude,
                angular_frequency,
                phase,
            } => amplitude * (angular_frequency * t + phase).sin(),
            Term::Harmonic {
                kind: Trig::Cos,
                amplitude,
                angular_frequency,
                phase,
            } => amplitude * (angular_frequency * t + phase).cos(),
        }
    }

    fn coefficient(&self) -> f64 {
        match *self {
            Term::Const(c) => c,
            Term::Harmonic { amplitude, .. } => amplitude,
        }
    }

    /// Writes the term with the magnitude of its leading coefficient; the
    /// caller emits the sign.
    fn fmt_unsigned(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Term::Const(c) => write!(f, "{}", c.abs()),
            Term::Harmonic {
                kind,
                amplitude,
                angular_frequency,
                phase,
            } => {
                write!(f, "{}*{}({}*t", amplitude.abs(), kind.name(), angular_frequency)?;
                if phase != 0.0 {
                    let sign = if phase.is_sign_negative() { '-' } else { '+' };
                    write!(f, " {} {}", sign, phase.abs())?;
                }
                f.write_str(")")
            }
        }
    }
}

/// A parsed scalar function of time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeExpr {
    terms: Vec<Term>,
}

impl TimeExpr {
    pub fn new(terms: Vec<Term>) -> Self {
        Self { terms }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            terms: vec![Term::Const(value)],
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Returns the constant value when the expression has no harmonic terms.
    pub fn as_constant(&self) -> Option<f64> {
        self.terms.iter().try_fold(0.0, |acc, term| match term {
            Term::Const(c) => Some(acc + c),
            Term::Harmonic { .. } => None,
        })
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.terms.iter().map(|term| term.eval(t)).sum()
    }
}

impl Add for TimeExpr {
    type Output = TimeExpr;

    fn add(mut self, rhs: TimeExpr) -> TimeExpr {
        self.terms.extend(rhs.terms);
        self
    }
}

impl fmt::Display for TimeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, term) in self.terms.iter().enumerate() {
            let negative = term.coefficient().is_sign_negative();
            match (i, negative) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            term.fmt_unsigned(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {position}: expected {expected}, found {found}")]
pub struct ParseError {
    pub position: usize,
    pub expected: String,
    pub found: String,
}

pub fn parse_expr(source: &str) -> Result<TimeExpr, ParseError> {
    Parser::new(source).parse()
}

impl FromStr for TimeExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}

impl Serialize for TimeExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TimeExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let source = String::deserialize(deserializer)?;
        parse_expr(&source).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Token {
    Number(f64),
    Plus,
    Minus,
    Star,
    LParen,
    RParen,
    T,
    Func(Trig),
    End,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Number(v) => format!("number {v}"),
            Token::Plus => "'+'".into(),
            Token::Minus => "'-'".into(),
            Token::Star => "'*'".into(),
            Token::LParen => "'('".into(),
            Token::RParen => "')'".into(),
            Token::T => "'t'".into(),
            Token::Func(kind) => format!("'{}'", kind.name()),
            Token::End => "end of input".into(),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    peeked: Option<(usize, Token)>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src,
            pos: 0,
            peeked: None,
        }
    }

    fn error<T>(&self, at: usize, expected: &str, found: String) -> Result<T, ParseError> {
        Err(ParseError {
            position: at,
            expected: expected.to_string(),
            found,
        })
    }

    fn lex(&mut self) -> Result<(usize, Token), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(start) else {
            return Ok((start, Token::End));
        };
        let single = |tok| Ok((start, tok));
        match c {
            b'+' => {
                self.pos += 1;
                single(Token::Plus)
            }
            b'-' => {
                self.pos += 1;
                single(Token::Minus)
            }
            b'*' => {
                self.pos += 1;
                single(Token::Star)
            }
            b'(' => {
                self.pos += 1;
                single(Token::LParen)
            }
            b')' => {
                self.pos += 1;
                single(Token::RParen)
            }
            b'0'..=b'9' | b'.' => {
                let mut end = start;
                while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                    end += 1;
                }
                // optional exponent
                if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                    let mut exp = end + 1;
                    if exp < bytes.len() && (bytes[exp] == b'+' || bytes[exp] == b'-') {
                        exp += 1;
                    }
                    if exp < bytes.len() && bytes[exp].is_ascii_digit() {
                        while exp < bytes.len() && bytes[exp].is_ascii_digit() {
                            exp += 1;
                        }
                        end = exp;
                    }
                }
                let text = &self.src[start..end];
                match text.parse::<f64>() {
                    Ok(v) if v.is_finite() => {
                        self.pos = end;
                        single(Token::Number(v))
                    }
                    _ => self.error(start, "a number", format!("'{text}'")),
                }
            }
            b'a'..=b'z' | b'A'..=b'Z' => {
                let mut end = start;
                while end < bytes.len() && bytes[end].is_ascii_alphanumeric() {
                    end += 1;
                }
                let word = &self.src[start..end];
                let tok = match word {
                    "t" => Token::T,
                    "sin" => Token::Func(Trig::Sin),
                    "cos" => Token::Func(Trig::Cos),
                    _ => return self.error(start, "'sin', 'cos' or 't'", format!("'{word}'")),
                };
                self.pos = end;
                single(tok)
            }
            _ => {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                self.error(start, "a term", format!("'{ch}'"))
            }
        }
    }

    fn peek(&mut self) -> Result<(usize, Token), ParseError> {
        if let Some(p) = self.peeked {
            return Ok(p);
        }
        let p = self.lex()?;
        self.peeked = Some(p);
        Ok(p)
    }

    fn next(&mut self) -> Result<(usize, Token), ParseError> {
        let p = self.peek()?;
        self.peeked = None;
        Ok(p)
    }

    fn expect(&mut self, want: Token, expected: &str) -> Result<(), ParseError> {
        let (at, tok) = self.next()?;
        if tok == want {
            Ok(())
        } else {
            self.error(at, expected, tok.describe())
        }
    }

    fn parse(mut self) -> Result<TimeExpr, ParseError> {
        let mut terms = Vec::new();
        let mut sign = match self.peek()? {
            (at, Token::End) => return self.error(at, "an expression", "empty input".into()),
            (_, Token::Minus) => {
                self.next()?;
                -1.0
            }
            (_, Token::Plus) => {
                self.next()?;
                1.0
            }
            _ => 1.0,
        };
        loop {
            terms.push(self.term(sign)?);
            match self.next()? {
                (_, Token::End) => break,
                (_, Token::Plus) => sign = 1.0,
                (_, Token::Minus) => sign = -1.0,
                (at, tok) => return self.error(at, "'+', '-' or end of input", tok.describe()),
            }
        }
        Ok(TimeExpr { terms })
    }

    fn term(&mut self, sign: f64) -> Result<Term, ParseError> {
        match self.next()? {
            (_, Token::Number(value)) => {
                if let (_, Token::Star) = self.peek()? {
                    self.next()?;
                    match self.next()? {
                        (_, Token::Func(kind)) => self.trig(kind, sign * value),
                        (at, tok) => self.error(at, "'sin' or 'cos'", tok.describe()),
                    }
                } else {
                    Ok(Term::Const(sign * value))
                }
            }
            (_, Token::Func(kind)) => self.trig(kind, sign),
            (at, tok) => self.error(at, "a number, 'sin' or 'cos'", tok.describe()),
        }
    }

    fn trig(&mut self, kind: Trig, amplitude: f64) -> Result<Term, ParseError> {
        self.expect(Token::LParen, "'('")?;
        let angular_frequency = match self.next()? {
            (_, Token::T) => 1.0,
            (_, Token::Number(w)) => {
                if let (_, Token::Star) = self.peek()? {
                    self.next()?;
                }
                self.expect(Token::T, "'t'")?;
                w
            }
            (at, tok) => return self.error(at, "a frequency or 't'", tok.describe()),
        };
        let phase = match self.next()? {
            (_, Token::RParen) => {
                return Ok(Term::Harmonic {
                    kind,
                    amplitude,
                    angular_frequency,
                    phase: 0.0,
                })
            }
            (_, Token::Plus) => self.phase_number()?,
            (_, Token::Minus) => -self.phase_number()?,
            (at, tok) => return self.error(at, "'+', '-' or ')'", tok.describe()),
        };
        self.expect(Token::RParen, "')'")?;
        Ok(Term::Harmonic {
            kind,
            amplitude,
            angular_frequency,
            phase,
        })
    }

    fn phase_number(&mut self) -> Result<f64, ParseError> {
        match self.next()? {
            (_, Token::Number(v)) => Ok(v),
            (at, tok) => self.error(at, "a phase number", tok.describe()),
        }
    }
}
