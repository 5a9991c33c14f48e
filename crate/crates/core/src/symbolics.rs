//! Scalar functions on R^N: text parsing and exact first/second derivatives
//! via forward-mode jets.

use nalgebra::{DMatrix, DVector};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {0}: {1}")]
    Syntax(usize, String),
    #[error("unknown identifier `{1}` at byte {0}")]
    UnknownIdent(usize, String),
    #[error("variable x{1} at byte {0} out of range: ambient dimension is {2}")]
    VarOutOfRange(usize, usize, usize),
    #[error("exponent at byte {0} must be an integer literal")]
    NonIntegerExponent(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("sqrt of negative value {0}")]
    SqrtDomain(f64),
    #[error("non-finite value in evaluation")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }
}

/// Abstract syntax tree for a scalar function of variables x1..xN.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// 0-based variable index.
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

/// Value together with gradient: first-order forward jet.
#[derive(Debug, Clone)]
pub struct Jet1 {
    pub value: f64,
    pub grad: DVector<f64>,
}

/// Value, gradient and symmetric Hessian: second-order forward jet.
#[derive(Debug, Clone)]
pub struct Jet2 {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl Jet2 {
    fn constant(v: f64, n: usize) -> Self {
        Jet2 {
            value: v,
            grad: DVector::zeros(n),
            hess: DMatrix::zeros(n, n),
        }
    }

    fn var(i: usize, v: f64, n: usize) -> Self {
        let mut g = DVector::zeros(n);
        g[i] = 1.0;
        Jet2 {
            value: v,
            grad: g,
            hess: DMatrix::zeros(n, n),
        }
    }

    pub fn add(&self, b: &Jet2) -> Jet2 {
        Jet2 {
            value: self.value + b.value,
            grad: &self.grad + &b.grad,
            hess: &self.hess + &b.hess,
        }
    }

    pub fn sub(&self, b: &Jet2) -> Jet2 {
        Jet2 {
            value: self.value - b.value,
            grad: &self.grad - &b.grad,
            hess: &self.hess - &b.hess,
        }
    }

    pub fn neg(&self) -> Jet2 {
        Jet2 {
            value: -self.value,
            grad: -&self.grad,
            hess: -&self.hess,
        }
    }

    pub fn scale(&self, c: f64) -> Jet2 {
        Jet2 {
            value: c * self.value,
            grad: c * &self.grad,
            hess: c * &self.hess,
        }
    }

    /// Product rule; the Hessian is filled from its upper triangle so the
    /// result is symmetric bit for bit.
    pub fn mul(&self, b: &Jet2) -> Jet2 {
        let n = self.grad.len();
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v = self.hess[(i, j)] * b.value
                    + b.hess[(i, j)] * self.value
                    + self.grad[i] * b.grad[j]
                    + self.grad[j] * b.grad[i];
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Jet2 {
            value: self.value * b.value,
            grad: self.value * &b.grad + b.value * &self.grad,
            hess: h,
        }
    }

    /// Chain rule for a univariate function with derivatives (d0, d1, d2)
    /// evaluated at self.value.
    pub fn chain(&self, d0: f64, d1: f64, d2: f64) -> Jet2 {
        let n = self.grad.len();
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v = d1 * self.hess[(i, j)] + d2 * (self.grad[i] * self.grad[j]);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Jet2 {
            value: d0,
            grad: d1 * &self.grad,
            hess: h,
        }
    }

    pub fn div(&self, b: &Jet2) -> Jet2 {
        let v = b.value;
        let r = b.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v));
        self.mul(&r)
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|x| x.is_finite())
            && self.hess.iter().all(|x| x.is_finite())
    }
}

impl Jet1 {
    fn constant(v: f64, n: usize) -> Self {
        Jet1 {
            value: v,
            grad: DVector::zeros(n),
        }
    }

    fn var(i: usize, v: f64, n: usize) -> Self {
        let mut g = DVector::zeros(n);
        g[i] = 1.0;
        Jet1 { value: v, grad: g }
    }

    pub fn chain(&self, d0: f64, d1: f64) -> Jet1 {
        Jet1 {
            value: d0,
            grad: d1 * &self.grad,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad.iter().all(|x| x.is_finite())
    }
}

/// A twice-differentiable scalar field on an ambient Euclidean space.
///
/// The ambient dimension is taken from the evaluation point, so a field
/// parsed for N variables is also usable on an extended ambient space.
pub trait ScalarField: Send + Sync + fmt::Debug {
    fn value(&self, p: &DVector<f64>) -> Result<f64, EvalError>;
    fn jet1(&self, p: &DVector<f64>) -> Result<Jet1, EvalError>;
    fn jet2(&self, p: &DVector<f64>) -> Result<Jet2, EvalError>;
}

impl ScalarField for Expr {
    fn value(&self, p: &DVector<f64>) -> Result<f64, EvalError> {
        let v = self.eval_value(p)?;
        if !v.is_finite() {
            return Err(EvalError::NonFinite);
        }
        Ok(v)
    }

    fn jet1(&self, p: &DVector<f64>) -> Result<Jet1, EvalError> {
        let j = self.eval_jet1(p)?;
        if !j.is_finite() {
            return Err(EvalError::NonFinite);
        }
        Ok(j)
    }

    fn jet2(&self, p: &DVector<f64>) -> Result<Jet2, EvalError> {
        let j = self.eval_jet2(p)?;
        if !j.is_finite() {
            return Err(EvalError::NonFinite);
        }
        Ok(j)
    }
}

impl Expr {
    /// Parse `text` over variables x1..x`ambient_dim`.
    pub fn parse(text: &str, ambient_dim: usize) -> Result<Expr, ParseError> {
        let tokens = lex(text)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            dim: ambient_dim,
            text_len: text.len(),
        };
        let e = p.expr()?;
        match p.peek() {
            None => Ok(e),
            Some(t) => Err(ParseError::Syntax(t.offset, "unexpected trailing input".into())),
        }
    }

    pub fn eval_value(&self, p: &DVector<f64>) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => p[*i],
            Expr::Add(a, b) => a.eval_value(p)? + b.eval_value(p)?,
            Expr::Sub(a, b) => a.eval_value(p)? - b.eval_value(p)?,
            Expr::Mul(a, b) => a.eval_value(p)? * b.eval_value(p)?,
            Expr::Div(a, b) => a.eval_value(p)? / b.eval_value(p)?,
            Expr::Neg(a) => -a.eval_value(p)?,
            Expr::Pow(a, k) => {
                let v = a.eval_value(p)?;
                let w = v.powi((*k).abs());
                if *k < 0 {
                    1.0 / w
                } else {
                    w
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval_value(p)?;
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Sqrt => {
                        if v < 0.0 {
                            return Err(EvalError::SqrtDomain(v));
                        }
                        v.sqrt()
                    }
                }
            }
        })
    }

    pub fn eval_jet1(&self, p: &DVector<f64>) -> Result<Jet1, EvalError> {
        let n = p.len();
        Ok(match self {
            Expr::Const(c) => Jet1::constant(*c, n),
            Expr::Var(i) => Jet1::var(*i, p[*i], n),
            Expr::Add(a, b) => {
                let (a, b) = (a.eval_jet1(p)?, b.eval_jet1(p)?);
                Jet1 {
                    value: a.value + b.value,
                    grad: a.grad + b.grad,
                }
            }
            Expr::Sub(a, b) => {
                let (a, b) = (a.eval_jet1(p)?, b.eval_jet1(p)?);
                Jet1 {
                    value: a.value - b.value,
                    grad: a.grad - b.grad,
                }
            }
            Expr::Mul(a, b) => {
                let (a, b) = (a.eval_jet1(p)?, b.eval_jet1(p)?);
                Jet1 {
                    value: a.value * b.value,
                    grad: a.value * &b.grad + b.value * &a.grad,
                }
            }
            Expr::Div(a, b) => {
                let (a, b) = (a.eval_jet1(p)?, b.eval_jet1(p)?);
                let inv = 1.0 / b.value;
                Jet1 {
                    value: a.value * inv,
                    grad: inv * &a.grad - (a.value * inv * inv) * &b.grad,
                }
            }
            Expr::Neg(a) => {
                let a = a.eval_jet1(p)?;
                Jet1 {
                    value: -a.value,
                    grad: -a.grad,
                }
            }
            Expr::Pow(a, k) => {
                let base = a.eval_jet1(p)?;
                let mut acc = Jet1::constant(1.0, n);
                for _ in 0..(*k).abs() {
                    acc = Jet1 {
                        value: acc.value * base.value,
                        grad: acc.value * &base.grad + base.value * &acc.grad,
                    };
                }
                if *k < 0 {
                    let inv = 1.0 / acc.value;
                    acc.chain(inv, -inv * inv)
                } else {
                    acc
                }
            }
            Expr::Call(f, a) => {
                let a = a.eval_jet1(p)?;
                let v = a.value;
                match f {
                    Func::Sin => a.chain(v.sin(), v.cos()),
                    Func::Cos => a.chain(v.cos(), -v.sin()),
                    Func::Exp => a.chain(v.exp(), v.exp()),
                    Func::Sqrt => {
                        if v < 0.0 {
                            return Err(EvalError::SqrtDomain(v));
                        }
                        let s = v.sqrt();
                        a.chain(s, 0.5 / s)
                    }
                }
            }
        })
    }

    pub fn eval_jet2(&self, p: &DVector<f64>) -> Result<Jet2, EvalError> {
        let n = p.len();
        Ok(match self {
            Expr::Const(c) => Jet2::constant(*c, n),
            Expr::Var(i) => Jet2::var(*i, p[*i], n),
            Expr::Add(a, b) => a.eval_jet2(p)?.add(&b.eval_jet2(p)?),
            Expr::Sub(a, b) => a.eval_jet2(p)?.sub(&b.eval_jet2(p)?),
            Expr::Mul(a, b) => a.eval_jet2(p)?.mul(&b.eval_jet2(p)?),
            Expr::Div(a, b) => a.eval_jet2(p)?.div(&b.eval_jet2(p)?),
            Expr::Neg(a) => a.eval_jet2(p)?.neg(),
            Expr::Pow(a, k) => {
                // Integer powers expand to repeated multiplication.
                let base = a.eval_jet2(p)?;
                let mut acc = Jet2::constant(1.0, n);
                for _ in 0..(*k).abs() {
                    acc = acc.mul(&base);
                }
                if *k < 0 {
                    let v = acc.value;
                    acc.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
                } else {
                    acc
                }
            }
            Expr::Call(f, a) => {
                let a = a.eval_jet2(p)?;
                let v = a.value;
                match f {
                    Func::Sin => a.chain(v.sin(), v.cos(), -v.sin()),
                    Func::Cos => a.chain(v.cos(), -v.sin(), -v.cos()),
                    Func::Exp => {
                        let e = v.exp();
                        a.chain(e, e, e)
                    }
                    Func::Sqrt => {
                        if v < 0.0 {
                            return Err(EvalError::SqrtDomain(v));
                        }
                        let s = v.sqrt();
                        a.chain(s, 0.5 / s, -0.25 / (s * v))
                    }
                }
            }
        })
    }

    /// Largest 1-based variable index referenced, or 0 if none.
    pub fn max_var(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.max_var().max(b.max_var())
            }
            Expr::Neg(a) => a.max_var(),
            Expr::Pow(a, _) => a.max_var(),
            Expr::Call(_, a) => a.max_var(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(out, "{}", format_literal(*c)),
            Expr::Var(i) => write!(out, "x{}", i + 1),
            Expr::Add(a, b) => write!(out, "({}+{})", a, b),
            Expr::Sub(a, b) => write!(out, "({}-{})", a, b),
            Expr::Mul(a, b) => write!(out, "({}*{})", a, b),
            Expr::Div(a, b) => write!(out, "({}/{})", a, b),
            Expr::Neg(a) => write!(out, "(-{})", a),
            Expr::Pow(a, k) => {
                if *k < 0 {
                    write!(out, "({}^(-{}))", a, -(*k as i64))
                } else {
                    write!(out, "({}^{})", a, k)
                }
            }
            Expr::Call(f, a) => write!(out, "{}({})", f.name(), a),
        }
    }
}

fn format_literal(c: f64) -> String {
    // Shortest round-trip representation keeps parse(print(e)) exact.
    let s = format!("{}", c);
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{}.0", s)
    }
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
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' | '-' | '*' | '/' | '^' | '(' | ')' => {
                let tok = match c {
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '*' => Tok::Star,
                    '/' => Tok::Slash,
                    '^' => Tok::Caret,
                    '(' => Tok::LParen,
                    _ => Tok::RParen,
                };
                out.push(Token { tok, offset: i });
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // exponent notation, e.g. 1.5e-3
                if i < bytes.len()
                    && matches!(bytes[i] as char, 'e' | 'E')
                    && i + 1 < bytes.len()
                    && matches!(bytes[i + 1] as char, '0'..='9' | '+' | '-')
                {
                    i += 2;
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
                let s = &text[start..i];
                let v: f64 = s
                    .parse()
                    .map_err(|_| ParseError::Syntax(start, format!("bad number `{}`", s)))?;
                out.push(Token {
                    tok: Tok::Num(v),
                    offset: start,
                });
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(text[start..i].to_string()),
                    offset: start,
                });
            }
            _ => {
                return Err(ParseError::Syntax(i, format!("unexpected character `{}`", c)));
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    dim: usize,
    text_len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn end_offset(&self) -> usize {
        self.text_len
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(t) = self.peek() {
            match t.tok {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(t) = self.peek() {
            match t.tok {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(t) = self.peek() {
            if t.tok == Tok::Minus {
                self.bump();
                return Ok(Expr::Neg(Box::new(self.unary()?)));
            }
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let mut base = self.atom()?;
        while let Some(t) = self.peek() {
            if t.tok != Tok::Caret {
                break;
            }
            self.bump();
            let mut sign = 1i32;
            if let Some(t) = self.peek() {
                if t.tok == Tok::Minus {
                    self.bump();
                    sign = -1;
                }
            }
            let t = self
                .bump()
                .ok_or_else(|| ParseError::Syntax(self.end_offset(), "expected exponent".into()))?;
            match t.tok {
                Tok::Num(v) => {
                    if v.fract() != 0.0 || v.abs() > 1e9 {
                        return Err(ParseError::NonIntegerExponent(t.offset));
                    }
                    base = Expr::Pow(Box::new(base), sign * v as i32);
                }
                _ => return Err(ParseError::NonIntegerExponent(t.offset)),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let t = self
            .bump()
            .ok_or_else(|| ParseError::Syntax(self.end_offset(), "unexpected end of input".into()))?;
        match t.tok {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let e = self.expr()?;
                match self.bump() {
                    Some(Token {
                        tok: Tok::RParen, ..
                    }) => Ok(e),
                    Some(u) => Err(ParseError::Syntax(u.offset, "expected `)`".into())),
                    None => Err(ParseError::Syntax(self.end_offset(), "expected `)`".into())),
                }
            }
            Tok::Ident(name) => {
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    "sqrt" => Some(Func::Sqrt),
                    _ => None,
                };
                if let Some(f) = func {
                    match self.bump() {
                        Some(Token {
                            tok: Tok::LParen, ..
                        }) => {}
                        Some(u) => {
                            return Err(ParseError::Syntax(u.offset, "expected `(`".into()))
                        }
                        None => {
                            return Err(ParseError::Syntax(self.end_offset(), "expected `(`".into()))
                        }
                    }
                    let arg = self.expr()?;
                    match self.bump() {
                        Some(Token {
                            tok: Tok::RParen, ..
                        }) => Ok(Expr::Call(f, Box::new(arg))),
                        Some(u) => Err(ParseError::Syntax(u.offset, "expected `)`".into())),
                        None => Err(ParseError::Syntax(self.end_offset(), "expected `)`".into())),
                    }
                } else if let Some(rest) = name.strip_prefix('x') {
                    match rest.parse::<usize>() {
                        Ok(idx) if idx >= 1 => {
                            if idx > self.dim {
                                Err(ParseError::VarOutOfRange(t.offset, idx, self.dim))
                            } else {
                                Ok(Expr::Var(idx - 1))
                            }
                        }
                        _ => Err(ParseError::UnknownIdent(t.offset, name)),
                    }
                } else {
                    Err(ParseError::UnknownIdent(t.offset, name))
                }
            }
            _ => Err(ParseError::Syntax(t.offset, "expected value".into())),
        }
    }
}

/// Parse a function of `ambient_dim` variables.
pub fn parse_expression(text: &str, ambient_dim: usize) -> Result<Expr, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Syntax(0, "empty input".into()));
    }
    Expr::parse(text, ambient_dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(coords: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(coords)
    }

    #[test]
    fn sphere_expression_at_pole() {
        let e = parse_expression("x1^2+x2^2+x3^2-1", 3).unwrap();
        assert_eq!(e.eval_value(&v(&[1.0, 0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn bilinear_jet() {
        let e = parse_expression("x1*x2", 2).unwrap();
        let j = e.eval_jet2(&v(&[2.0, 3.0])).unwrap();
        assert_eq!(j.value, 6.0);
        assert_eq!(j.grad, v(&[3.0, 2.0]));
        assert_eq!(j.hess, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn syntax_error_offset() {
        let err = parse_expression("x1^2+", 1).unwrap_err();
        assert_eq!(err, ParseError::Syntax(5, "unexpected end of input".into()));
    }

    #[test]
    fn quadratic_form_jet() {
        let e = parse_expression("3*x1^2+2*x2^2+x3^2", 3).unwrap();
        let j = e.eval_jet2(&v(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(j.value, 3.0);
        assert_eq!(j.grad, v(&[6.0, 0.0, 0.0]));
        let d = DMatrix::from_diagonal(&v(&[6.0, 4.0, 2.0]));
        assert_eq!(j.hess, d);
    }

    #[test]
    fn sin_taylor_at_zero() {
        let e = parse_expression("sin(x1)", 1).unwrap();
        let j = e.eval_jet2(&v(&[0.0])).unwrap();
        assert_eq!(j.value, 0.0);
        assert_eq!(j.grad[0], 1.0);
        assert_eq!(j.hess[(0, 0)], 0.0);
    }

    #[test]
    fn torus_point() {
        let e = parse_expression("(sqrt(x1^2+x2^2)-2)^2+x3^2-1", 3).unwrap();
        let j = e.eval_jet2(&v(&[3.0, 0.0, 0.0])).unwrap();
        assert!(j.value.abs() < 1e-15);
    }

    #[test]
    fn unknown_identifier() {
        let err = parse_expression("y1+1", 2).unwrap_err();
        assert!(matches!(err, ParseError::UnknownIdent(0, _)));
    }

    #[test]
    fn var_out_of_range() {
        let err = parse_expression("x4", 3).unwrap_err();
        assert!(matches!(err, ParseError::VarOutOfRange(0, 4, 3)));
    }

    #[test]
    fn non_integer_exponent() {
        let err = parse_expression("x1^1.5", 1).unwrap_err();
        assert!(matches!(err, ParseError::NonIntegerExponent(3)));
    }

    #[test]
    fn sqrt_domain_error() {
        let e = parse_expression("sqrt(x1)", 1).unwrap();
        assert!(matches!(
            e.eval_jet2(&v(&[-1.0])),
            Err(EvalError::SqrtDomain(_))
        ));
    }

    #[test]
    fn division_by_zero_is_flagged() {
        let e = parse_expression("1/x1", 1).unwrap();
        assert!(matches!(e.jet2(&v(&[0.0])), Err(EvalError::NonFinite)));
    }

    #[test]
    fn precedence_unary_minus_vs_power() {
        // ^ binds tighter than unary minus: -x^2 at x=3 is -9.
        let e = parse_expression("-x1^2", 1).unwrap();
        assert_eq!(e.eval_value(&v(&[3.0])).unwrap(), -9.0);
    }

    #[test]
    fn left_associative_sub_div() {
        let e = parse_expression("8-4-2", 1).unwrap();
        assert_eq!(e.eval_value(&v(&[0.0])).unwrap(), 2.0);
        let e = parse_expression("8/4/2", 1).unwrap();
        assert_eq!(e.eval_value(&v(&[0.0])).unwrap(), 1.0);
    }

    #[test]
    fn print_parse_roundtrip() {
        let src = "(sqrt(x1^2+x2^2)-2)^2+x3^2-1";
        let e = parse_expression(src, 3).unwrap();
        let e2 = parse_expression(&e.to_string(), 3).unwrap();
        let p = v(&[2.3, 0.7, -0.4]);
        assert_eq!(e.eval_value(&p).unwrap(), e2.eval_value(&p).unwrap());
    }

    #[test]
    fn hessian_bitwise_symmetric() {
        let e = parse_expression("sin(x1*x2)*exp(x2)+x1^3/(1+x2^2)", 2).unwrap();
        let j = e.eval_jet2(&v(&[0.3, -0.8])).unwrap();
        for i in 0..2 {
            for jj in 0..2 {
                assert_eq!(j.hess[(i, jj)].to_bits(), j.hess[(jj, i)].to_bits());
            }
        }
    }
}
