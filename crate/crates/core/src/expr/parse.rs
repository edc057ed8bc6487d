use std::fmt;

use super::{BinaryOp, Expr, UnaryOp};

/// Largest literal integer exponent expanded into repeated multiplication.
const MAX_EXPANDED_POWER: i64 = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at position {}", self.message, self.position)
    }
}

impl std::error::Error for ParseError {}

/// Parse an expression over `x1..xn` and `t`.
///
/// ```text
/// expr   := term (('+'|'-') term)*
/// term   := unary (('*'|'/') unary)*
/// unary  := '-' unary | factor
/// factor := base ('^' base)?
/// base   := number | 'x'digits | 't' | 'pi' | ident '(' expr ')' | '(' expr ')'
/// ```
pub fn parse(source: &str, n: usize) -> Result<Expr, ParseError> {
    let mut p = Parser::new(source, n);
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

pub(crate) struct Parser<'a> {
    pub(crate) src: &'a [u8],
    pub(crate) pos: usize,
    n: usize,
}

impl<'a> Parser<'a> {
    pub(crate) fn new(source: &'a str, n: usize) -> Self {
        Parser {
            src: source.as_bytes(),
            pos: 0,
            n,
        }
    }

    pub(crate) fn error(&self, message: &str) -> ParseError {
        ParseError {
            position: self.pos,
            message: message.to_string(),
        }
    }

    pub(crate) fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    pub(crate) fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    pub(crate) fn peek_str(&mut self, s: &str) -> bool {
        self.skip_ws();
        self.src[self.pos..].starts_with(s.as_bytes())
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub(crate) fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinaryOp::Add,
                Some(b'-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinaryOp::Mul,
                Some(b'/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Const(c) => Expr::Const(-c),
                other => Expr::Unary(UnaryOp::Neg, Box::new(other)),
            });
        }
        self.factor()
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.base()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let exponent = self.base()?;
        Ok(expand_power(base, exponent))
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let s = self.src;
        let digits = |p: &mut usize| {
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
        };
        let mut p = self.pos;
        digits(&mut p);
        if p < s.len() && s[p] == b'.' {
            p += 1;
            digits(&mut p);
        }
        if p < s.len() && (s[p] == b'e' || s[p] == b'E') {
            let mut q = p + 1;
            if q < s.len() && (s[q] == b'+' || s[q] == b'-') {
                q += 1;
            }
            if q < s.len() && s[q].is_ascii_digit() {
                digits(&mut q);
                p = q;
            }
        }
        let text = std::str::from_utf8(&s[start..p]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.pos = p;
                Ok(Expr::Const(v))
            }
            _ => Err(self.error("malformed number")),
        }
    }

    fn identifier(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        if name == "t" {
            return Ok(Expr::Time);
        }
        if name == "pi" {
            return Ok(Expr::Const(std::f64::consts::PI));
        }
        if let Some(idx) = name
            .strip_prefix('x')
            .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
        {
            let index: usize = idx.parse().map_err(|_| ParseError {
                position: start,
                message: "variable index out of range".into(),
            })?;
            if index == 0 || index > self.n {
                return Err(ParseError {
                    position: start,
                    message: "variable index out of range".into(),
                });
            }
            return Ok(Expr::Var(index - 1));
        }
        let Some(op) = UnaryOp::from_name(name) else {
            return Err(ParseError {
                position: start,
                message: format!("unknown identifier '{name}'"),
            });
        };
        if !self.eat(b'(') {
            return Err(self.error("expected '(' after function name"));
        }
        let arg = self.expr()?;
        if !self.eat(b')') {
            return Err(self.error("expected ')'"));
        }
        Ok(Expr::Unary(op, Box::new(arg)))
    }
}

/// Integer literal exponents up to 8 in magnitude become repeated
/// multiplication so that negative bases are handled exactly.
fn expand_power(base: Expr, exponent: Expr) -> Expr {
    let Some(e) = exponent.as_const() else {
        return Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent));
    };
    if e.fract() != 0.0 || e.abs() > MAX_EXPANDED_POWER as f64 {
        return Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent));
    }
    let k = e as i64;
    if k == 0 {
        return Expr::Const(1.0);
    }
    let mut product = base.clone();
    for _ in 1..k.abs() {
        product = Expr::Binary(BinaryOp::Mul, Box::new(product), Box::new(base.clone()));
    }
    if k < 0 {
        Expr::Binary(BinaryOp::Div, Box::new(Expr::Const(1.0)), Box::new(product))
    } else {
        product
    }
}
