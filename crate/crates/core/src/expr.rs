//! Polynomial expressions in the coordinates `x1..xn`.
//!
//! Cometric entries are written in a tiny grammar and kept as expression
//! trees, so exact partial derivatives of any order are available:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor ('*' factor)*
//! factor := NUMBER | IDENT | '-' factor | '(' expr ')'
//! IDENT  := 'x' [1-9][0-9]*
//! NUMBER := [0-9]+ ('.' [0-9]*)? ([eE] [+-]? [0-9]+)?
//! ```
//!
//! Unary minus binds tighter than `*`, which binds tighter than binary `+`/`-`.
//! All binary operators are left-associative. Coordinate indices are 1-based.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Expression tree over the coordinates of an `n`-dimensional chart.
#[derive(Clone, Debug, PartialEq)]
pub enum Expression {
    Constant(f64),
    /// 1-based coordinate index.
    Coordinate(usize),
    Neg(Box<Expression>),
    Add(Box<Expression>, Box<Expression>),
    Sub(Box<Expression>, Box<Expression>),
    Mul(Box<Expression>, Box<Expression>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("coordinate x{index} at byte {offset} exceeds dimension {dim}")]
    CoordinateOutOfRange {
        offset: usize,
        index: usize,
        dim: usize,
    },
}

impl Expression {
    pub fn zero() -> Self {
        Expression::Constant(0.0)
    }

    pub fn constant(value: f64) -> Self {
        Expression::Constant(value)
    }

    /// Coordinate `x{index}`, 1-based.
    pub fn coordinate(index: usize) -> Self {
        assert!(index >= 1, "coordinate indices are 1-based");
        Expression::Coordinate(index)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expression::Constant(c) if *c == 0.0)
    }

    fn as_constant(&self) -> Option<f64> {
        match self {
            Expression::Constant(c) => Some(*c),
            _ => None,
        }
    }

    // Smart constructors used by `differentiate`: they fold literal zeros and
    // ones so derivative trees of polynomials stay small.

    pub fn sum(a: Expression, b: Expression) -> Expression {
        match (a.as_constant(), b.as_constant()) {
            (Some(x), Some(y)) => Expression::Constant(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => Expression::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn difference(a: Expression, b: Expression) -> Expression {
        match (a.as_constant(), b.as_constant()) {
            (Some(x), Some(y)) => Expression::Constant(x - y),
            (Some(x), _) if x == 0.0 => Expression::negation(b),
            (_, Some(y)) if y == 0.0 => a,
            _ => Expression::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn product(a: Expression, b: Expression) -> Expression {
        match (a.as_constant(), b.as_constant()) {
            (Some(x), Some(y)) => Expression::Constant(x * y),
            (Some(x), _) if x == 0.0 => Expression::zero(),
            (_, Some(y)) if y == 0.0 => Expression::zero(),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            _ => Expression::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn negation(a: Expression) -> Expression {
        match a {
            Expression::Constant(c) => Expression::Constant(-c),
            Expression::Neg(inner) => *inner,
            other => Expression::Neg(Box::new(other)),
        }
    }

    /// Largest coordinate index referenced, or 0 for constant trees.
    pub fn max_coordinate(&self) -> usize {
        match self {
            Expression::Constant(_) => 0,
            Expression::Coordinate(i) => *i,
            Expression::Neg(a) => a.max_coordinate(),
            Expression::Add(a, b) | Expression::Sub(a, b) | Expression::Mul(a, b) => {
                a.max_coordinate().max(b.max_coordinate())
            }
        }
    }

    /// Recursive evaluation. `point[i]` holds coordinate `x{i+1}`.
    pub fn evaluate(&self, point: &[f64]) -> f64 {
        match self {
            Expression::Constant(c) => *c,
            Expression::Coordinate(i) => point[*i - 1],
            Expression::Neg(a) => -a.evaluate(point),
            Expression::Add(a, b) => a.evaluate(point) + b.evaluate(point),
            Expression::Sub(a, b) => a.evaluate(point) - b.evaluate(point),
            Expression::Mul(a, b) => a.evaluate(point) * b.evaluate(point),
        }
    }

    /// Exact partial derivative with respect to `x{coordinate}` (1-based).
    pub fn differentiate(&self, coordinate: usize) -> Expression {
        match self {
            Expression::Constant(_) => Expression::zero(),
            Expression::Coordinate(i) => {
                Expression::Constant(if *i == coordinate { 1.0 } else { 0.0 })
            }
            Expression::Neg(a) => Expression::negation(a.differentiate(coordinate)),
            Expression::Add(a, b) => {
                Expression::sum(a.differentiate(coordinate), b.differentiate(coordinate))
            }
            Expression::Sub(a, b) => {
                Expression::difference(a.differentiate(coordinate), b.differentiate(coordinate))
            }
            Expression::Mul(a, b) => Expression::sum(
                Expression::product(a.differentiate(coordinate), (**b).clone()),
                Expression::product((**a).clone(), b.differentiate(coordinate)),
            ),
        }
    }

    /// Expands the tree into a sum of monomials for fast repeated evaluation.
    pub fn to_polynomial(&self, dim: usize) -> Polynomial {
        match self {
            Expression::Constant(c) => Polynomial::constant(dim, *c),
            Expression::Coordinate(i) => Polynomial::coordinate(dim, *i),
            Expression::Neg(a) => a.to_polynomial(dim).scaled(-1.0),
            Expression::Add(a, b) => a.to_polynomial(dim).add(&b.to_polynomial(dim), 1.0),
            Expression::Sub(a, b) => a.to_polynomial(dim).add(&b.to_polynomial(dim), -1.0),
            Expression::Mul(a, b) => a.to_polynomial(dim).mul(&b.to_polynomial(dim)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expression::Add(..) | Expression::Sub(..) => 1,
            Expression::Mul(..) => 2,
            Expression::Constant(c) if c.is_sign_negative() => 1,
            _ => 3,
        }
    }

    fn fmt_with(&self, f: &mut fmt::Formatter<'_>, min_precedence: u8) -> fmt::Result {
        let wrap = self.precedence() < min_precedence;
        if wrap {
            f.write_str("(")?;
        }
        match self {
            Expression::Constant(c) => write!(f, "{c:?}")?,
            Expression::Coordinate(i) => write!(f, "x{i}")?,
            Expression::Neg(a) => {
                f.write_str("-")?;
                a.fmt_with(f, 3)?;
            }
            // Right operands of the left-associative operators are wrapped
            // whenever they sit at the same level, so the tree shape survives
            // a print/parse cycle.
            Expression::Add(a, b) => {
                a.fmt_with(f, 1)?;
                f.write_str(" + ")?;
                b.fmt_with(f, 2)?;
            }
            Expression::Sub(a, b) => {
                a.fmt_with(f, 1)?;
                f.write_str(" - ")?;
                b.fmt_with(f, 2)?;
            }
            Expression::Mul(a, b) => {
                a.fmt_with(f, 2)?;
                f.write_str("*")?;
                b.fmt_with(f, 3)?;
            }
        }
        if wrap {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_with(f, 0)
    }
}

impl std::ops::Add for Expression {
    type Output = Expression;
    fn add(self, rhs: Expression) -> Expression {
        Expression::sum(self, rhs)
    }
}

impl std::ops::Sub for Expression {
    type Output = Expression;
    fn sub(self, rhs: Expression) -> Expression {
        Expression::difference(self, rhs)
    }
}

impl std::ops::Mul for Expression {
    type Output = Expression;
    fn mul(self, rhs: Expression) -> Expression {
        Expression::product(self, rhs)
    }
}

impl std::ops::Neg for Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        Expression::negation(self)
    }
}

/// Parses `source` into an expression over coordinates `x1..x{dim}`.
pub fn parse(source: &str, dim: usize) -> Result<Expression, ParseError> {
    let mut parser = Parser {
        src: source.as_bytes(),
        pos: 0,
        dim,
    };
    let expr = parser.expr()?;
    parser.skip_ws();
    if parser.pos < parser.src.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(expr)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expression::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expression::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expression::Mul(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expression, ParseError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expression::Neg(Box::new(self.factor()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(b'x') => self.identifier(),
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(_) => Err(self.error("expected a number, coordinate, '-' or '('")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn identifier(&mut self) -> Result<Expression, ParseError> {
        let start = self.pos;
        self.pos += 1;
        let digits_start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let digits = &self.src[digits_start..self.pos];
        if digits.is_empty() || digits[0] == b'0' {
            self.pos = start;
            return Err(self.error("coordinate names are x1, x2, ..."));
        }
        let index: usize = std::str::from_utf8(digits)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ParseError::Syntax {
                offset: start,
                message: "coordinate index too large".into(),
            })?;
        if index > self.dim {
            return Err(ParseError::CoordinateOutOfRange {
                offset: start,
                index,
                dim: self.dim,
            });
        }
        Ok(Expression::Coordinate(index))
    }

    fn number(&mut self) -> Result<Expression, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = mark;
                return Err(self.error("malformed exponent"));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
            offset: start,
            message: format!("invalid number {text:?}"),
        })?;
        if !value.is_finite() {
            return Err(ParseError::Syntax {
                offset: start,
                message: format!("literal {text} is not finite"),
            });
        }
        Ok(Expression::Constant(value))
    }
}

/// Sum of monomials `coeff * x1^e1 * ... * xn^en`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<Monomial>,
}

#[derive(Clone, Debug, PartialEq)]
struct Monomial {
    coeff: f64,
    /// (0-based variable, exponent) pairs with nonzero exponent.
    factors: Vec<(usize, u32)>,
}

impl Polynomial {
    fn from_map(dim: usize, map: BTreeMap<Vec<u32>, f64>) -> Self {
        let terms = map
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(exps, coeff)| Monomial {
                coeff,
                factors: exps
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| **e > 0)
                    .map(|(v, e)| (v, *e))
                    .collect(),
            })
            .collect();
        Polynomial { dim, terms }
    }

    fn to_map(&self) -> BTreeMap<Vec<u32>, f64> {
        let mut map = BTreeMap::new();
        for t in &self.terms {
            let mut exps = vec![0u32; self.dim];
            for &(v, e) in &t.factors {
                exps[v] = e;
            }
            *map.entry(exps).or_insert(0.0) += t.coeff;
        }
        map
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut map = BTreeMap::new();
        map.insert(vec![0; dim], c);
        Self::from_map(dim, map)
    }

    pub fn coordinate(dim: usize, index: usize) -> Self {
        let mut exps = vec![0; dim];
        exps[index - 1] = 1;
        let mut map = BTreeMap::new();
        map.insert(exps, 1.0);
        Self::from_map(dim, map)
    }

    fn scaled(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.coeff *= s;
        }
        self
    }

    fn add(&self, other: &Polynomial, sign: f64) -> Polynomial {
        let mut map = self.to_map();
        for (k, v) in other.to_map() {
            *map.entry(k).or_insert(0.0) += sign * v;
        }
        Self::from_map(self.dim, map)
    }

    fn mul(&self, other: &Polynomial) -> Polynomial {
        let a = self.to_map();
        let b = other.to_map();
        let mut map = BTreeMap::new();
        for (ea, ca) in &a {
            for (eb, cb) in &b {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                *map.entry(e).or_insert(0.0) += ca * cb;
            }
        }
        Self::from_map(self.dim, map)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.factors.iter().map(|f| f.1).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn evaluate(&self, point: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.factors
                    .iter()
                    .fold(t.coeff, |acc, &(v, e)| acc * point[v].powi(e as i32))
            })
            .sum()
    }
}
