//! Recursive-descent parser.
//!
//! ```text
//! expr  := term (('+'|'-') term)*
//! term  := unary (('*'|'/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' exponent)?
//! atom  := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Exponents are signed integer literals, optionally parenthesized; a tower
//! `x^2^3` is right-associative and folds to `x^8`. A minus sign directly in
//! front of a number literal (and not followed by `^`) produces a negative
//! constant, so `-2` is `Const(-2)` while `-2^2` is `Neg(Pow(2, 2))`.

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use super::{is_identifier, Expr, Func};

/// Syntax error with the byte offset where parsing stopped.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at offset {offset}: expected {expected}, found {found}")]
pub struct ParseError {
    pub offset: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Ident(s) => write!(f, "identifier '{s}'"),
            Tok::Plus => f.write_str("'+'"),
            Tok::Minus => f.write_str("'-'"),
            Tok::Star => f.write_str("'*'"),
            Tok::Slash => f.write_str("'/'"),
            Tok::Caret => f.write_str("'^'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

struct Token {
    tok: Tok,
    offset: usize,
    /// Source text of numeric literals, used for integer exponents.
    text: String,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let simple = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Token { tok, offset: start, text: String::new() });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| ParseError {
                offset: start,
                expected: "number".into(),
                found: format!("'{text}'"),
            })?;
            if !value.is_finite() {
                return Err(ParseError { offset: start, expected: "finite number".into(), found: format!("'{text}'") });
            }
            out.push(Token { tok: Tok::Num(value), offset: start, text: text.to_string() });
            continue;
        }
        if c.is_ascii_alphabetic() {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let name = &src[start..i];
            debug_assert!(is_identifier(name));
            out.push(Token { tok: Tok::Ident(name.to_string()), offset: start, text: String::new() });
            continue;
        }
        let ch = src[start..].chars().next().unwrap_or('?');
        return Err(ParseError { offset: start, expected: "expression".into(), found: format!("character '{ch}'") });
    }
    out.push(Token { tok: Tok::End, offset: src.len(), text: String::new() });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let idx = (self.pos + ahead).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].offset
    }

    fn bump(&mut self) -> &Token {
        let t = &self.tokens[self.pos];
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> ParseError {
        ParseError { offset: self.offset(), expected: expected.to_string(), found: self.peek().to_string() }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = lhs + self.term()?;
                }
                Tok::Minus => {
                    self.bump();
                    lhs = lhs - self.term()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = lhs * self.unary()?;
                }
                Tok::Slash => {
                    self.bump();
                    lhs = lhs / self.unary()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() != Tok::Minus {
            return self.power();
        }
        if let Tok::Num(v) = *self.peek_at(1) {
            if *self.peek_at(2) != Tok::Caret {
                self.bump();
                self.bump();
                return Ok(Expr::Const(-v));
            }
        }
        self.bump();
        Ok(-self.unary()?)
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let k = self.exponent()?;
        Ok(base.pow(k))
    }

    /// Signed integer exponent, folding right-associative towers.
    fn exponent(&mut self) -> Result<i32, ParseError> {
        let start = self.offset();
        let parenthesized = *self.peek() == Tok::LParen;
        if parenthesized {
            self.bump();
        }
        let negative = *self.peek() == Tok::Minus;
        if negative {
            self.bump();
        }
        let digits_at = self.offset();
        let value: i64 = match self.peek() {
            Tok::Num(_) => {
                let text = self.tokens[self.pos].text.clone();
                if !text.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(ParseError {
                        offset: digits_at,
                        expected: "integer exponent".into(),
                        found: format!("'{text}'"),
                    });
                }
                self.bump();
                text.parse().map_err(|_| ParseError {
                    offset: digits_at,
                    expected: "exponent within range".into(),
                    found: format!("'{text}'"),
                })?
            }
            _ => return Err(self.error("integer exponent")),
        };
        let mut value = if negative { -value } else { value };
        if parenthesized {
            self.expect(Tok::RParen, "')'")?;
        }
        if *self.peek() == Tok::Caret {
            self.bump();
            let inner = self.exponent()?;
            if inner < 0 {
                return Err(ParseError {
                    offset: start,
                    expected: "non-negative exponent in a power tower".into(),
                    found: format!("{value}^{inner}"),
                });
            }
            value = value.checked_pow(inner as u32).ok_or_else(|| ParseError {
                offset: start,
                expected: "exponent within range".into(),
                found: format!("{value}^{inner}"),
            })?;
        }
        i32::try_from(value).map_err(|_| ParseError {
            offset: start,
            expected: "exponent within range".into(),
            found: value.to_string(),
        })
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(func) = Func::from_name(&name) {
                    self.expect(Tok::LParen, &format!("'(' after '{name}'"))?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "')'")?;
                    return Ok(Expr::Func(func, Box::new(arg)));
                }
                if name == "pi" {
                    return Ok(Expr::Const(PI));
                }
                Ok(Expr::Var(name))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            _ => Err(self.error("expression")),
        }
    }
}

/// Parses an expression string.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let e = parser.expr()?;
    if *parser.peek() != Tok::End {
        return Err(parser.error("operator or end of input"));
    }
    Ok(e)
}
