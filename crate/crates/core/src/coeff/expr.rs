//! Arithmetic expressions over `t, x1..xd`: tokenizer, recursive-descent
//! parser, printer and evaluator.
//!
//! Precedence from tightest: `^` (right associative), unary minus, `* /`,
//! `+ -` (left associative). `-x^2` is `-(x^2)` and `x^-1` is accepted.
//! Functions: `sin cos exp tanh abs` (one argument), `min max` (two).

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Abs,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Time,
    /// State component, 1-based as written (`x1` is `Var(1)`).
    Var(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at byte {offset}: expected {}, found {found}", expected.join(" or "))]
pub struct ParseError {
    pub offset: usize,
    pub expected: Vec<String>,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("variable x{0} is not defined for a {1}-dimensional state")]
    UnknownVariable(usize, usize),
    #[error("non-finite result")]
    NonFinite,
}

// Convenience constructors used by the coefficient catalog.
impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    pub fn var(i: usize) -> Self {
        Expr::Var(i)
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    /// Highest state index referenced (0 if none).
    pub fn max_var(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Time => 0,
            Expr::Var(i) => *i,
            Expr::Neg(e) => e.max_var(),
            Expr::Binary(_, a, b) => a.max_var().max(b.max_var()),
            Expr::Call(_, args) => args.iter().map(Expr::max_var).max().unwrap_or(0),
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<f64, EvalError> {
        let v = self.eval_raw(t, x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    fn eval_raw(&self, t: f64, x: &[f64]) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Time => t,
            Expr::Var(i) => *x
                .get(i.wrapping_sub(1))
                .ok_or(EvalError::UnknownVariable(*i, x.len()))?,
            Expr::Neg(e) => -e.eval_raw(t, x)?,
            Expr::Binary(op, a, b) => {
                let a = a.eval_raw(t, x)?;
                let b = b.eval_raw(t, x)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval_raw(t, x)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Tanh => a.tanh(),
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval_raw(t, x)?),
                    Func::Max => a.max(args[1].eval_raw(t, x)?),
                }
            }
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Binary(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, e: &Expr, wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

macro_rules! binary_op {
    ($tr:ident, $method:ident, $op:expr) => {
        impl std::ops::$tr for Expr {
            type Output = Expr;

            fn $method(self, rhs: Expr) -> Expr {
                Expr::bin($op, self, rhs)
            }
        }
    };
}

binary_op!(Add, add, BinOp::Add);
binary_op!(Sub, sub, BinOp::Sub);
binary_op!(Mul, mul, BinOp::Mul);
binary_op!(Div, div, BinOp::Div);

impl std::ops::Neg for Expr {
    type Output = Expr;

    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Time => write!(f, "t"),
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                write_wrapped(f, e, e.precedence() < 3)
            }
            Expr::Binary(BinOp::Pow, a, b) => {
                write_wrapped(f, a, a.precedence() <= 4)?;
                write!(f, "^")?;
                write_wrapped(f, b, b.precedence() < 3)
            }
            Expr::Binary(op, a, b) => {
                let p = self.precedence();
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => unreachable!(),
                };
                write_wrapped(f, a, a.precedence() < p)?;
                write!(f, " {sym} ")?;
                write_wrapped(f, b, b.precedence() <= p)
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::End => "end of input".into(),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == b'.' {
            let start = i;
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
            let v = text.parse::<f64>().map_err(|_| ParseError {
                offset: start,
                expected: vec!["number".into()],
                found: format!("`{text}`"),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else if b"+-*/^(),".contains(&c) {
            out.push((Tok::Sym(c as char), i));
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap();
            return Err(ParseError {
                offset: i,
                expected: vec!["expression".into()],
                found: format!("`{ch}`"),
            });
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        ParseError {
            offset: self.offset(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&[&format!("`{c}`")]))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Expr::bin(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            lhs = Expr::bin(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(-self.unary()?);
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Expr::bin(BinOp::Pow, base, self.unary()?));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        const ATOM: &[&str] = &["number", "variable", "function", "`(`", "`-`"];
        match self.peek().clone() {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Tok::Sym('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if name == "t" {
                    self.pos += 1;
                    return Ok(Expr::Time);
                }
                if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                    if idx >= 1 && !name[1..].starts_with('0') {
                        self.pos += 1;
                        return Ok(Expr::Var(idx));
                    }
                }
                let Some(func) = Func::from_name(&name) else {
                    return Err(self.error(ATOM));
                };
                self.pos += 1;
                self.expect('(')?;
                let mut args = vec![self.expr()?];
                for _ in 1..func.arity() {
                    self.expect(',')?;
                    args.push(self.expr()?);
                }
                self.expect(')')?;
                Ok(Expr::Call(func, args))
            }
            _ => Err(self.error(ATOM)),
        }
    }
}

pub fn parse_expression(src: &str) -> Result<Expr, ParseError> {
    let toks = tokenize(src)?;
    let mut p = Parser { toks, pos: 0 };
    if *p.peek() == Tok::End {
        return Err(p.error(&["expression"]));
    }
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.error(&["operator", "end of input"]));
    }
    Ok(e)
}
