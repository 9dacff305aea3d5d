//! Closed-form scalar expressions with exact first and second derivatives.
//!
//! Expressions are small trees over `+ - * /`, powers, `sqrt`, `norm`, and a
//! handful of elementary functions. Evaluation on a [`Jet`] propagates value,
//! gradient and Hessian together (second-order forward mode), so every field
//! built from an expression has analytic derivative suppliers.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    /// Value and first two derivatives at `a`.
    fn eval3(self, a: f64) -> (f64, f64, f64) {
        match self {
            Func::Sqrt => {
                let s = a.sqrt();
                (s, 0.5 / s, -0.25 / (s * a))
            }
            Func::Exp => {
                let e = a.exp();
                (e, e, e)
            }
            Func::Log => (a.ln(), 1.0 / a, -1.0 / (a * a)),
            Func::Sin => {
                let (s, c) = a.sin_cos();
                (s, c, -s)
            }
            Func::Cos => {
                let (s, c) = a.sin_cos();
                (c, -s, -c)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    Norm(Vec<Expr>),
}

/// Value, gradient and Hessian (row-major) of a scalar at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl Jet {
    pub fn constant(value: f64, n: usize) -> Self {
        Jet {
            value,
            grad: vec![0.0; n],
            hess: vec![0.0; n * n],
        }
    }

    pub fn variable(value: f64, index: usize, n: usize) -> Self {
        let mut j = Jet::constant(value, n);
        j.grad[index] = 1.0;
        j
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    fn zip(mut self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        self.value = f(self.value, other.value);
        for (a, b) in self.grad.iter_mut().zip(&other.grad) {
            *a = f(*a, *b);
        }
        for (a, b) in self.hess.iter_mut().zip(&other.hess) {
            *a = f(*a, *b);
        }
        self
    }

    pub fn plus(self, other: &Jet) -> Jet {
        self.zip(other, |a, b| a + b)
    }

    pub fn minus(self, other: &Jet) -> Jet {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(mut self, c: f64) -> Jet {
        self.value *= c;
        self.grad.iter_mut().for_each(|g| *g *= c);
        self.hess.iter_mut().for_each(|h| *h *= c);
        self
    }

    pub fn mul(&self, other: &Jet) -> Jet {
        let n = self.dim();
        let (a, b) = (self.value, other.value);
        let mut out = Jet::constant(a * b, n);
        for i in 0..n {
            out.grad[i] = a * other.grad[i] + b * self.grad[i];
        }
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                out.hess[k] = a * other.hess[k]
                    + b * self.hess[k]
                    + self.grad[i] * other.grad[j]
                    + other.grad[i] * self.grad[j];
            }
        }
        out
    }

    /// Chain rule for `f(self)` given `f`, `f'`, `f''` at `self.value`.
    pub fn chain(&self, f: f64, df: f64, d2f: f64) -> Jet {
        let n = self.dim();
        let mut out = Jet::constant(f, n);
        for i in 0..n {
            out.grad[i] = df * self.grad[i];
        }
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                out.hess[k] = df * self.hess[k] + d2f * self.grad[i] * self.grad[j];
            }
        }
        out
    }

    pub fn recip(&self) -> Jet {
        let a = self.value;
        self.chain(1.0 / a, -1.0 / (a * a), 2.0 / (a * a * a))
    }

    pub fn powf(&self, c: f64) -> Jet {
        let a = self.value;
        if c == 0.0 {
            return Jet::constant(1.0, self.dim());
        }
        if c.fract() == 0.0 && c.abs() < 64.0 {
            let k = c as i32;
            let f = a.powi(k);
            let df = if k == 0 { 0.0 } else { c * a.powi(k - 1) };
            let d2f = if k == 0 || k == 1 {
                0.0
            } else {
                c * (c - 1.0) * a.powi(k - 2)
            };
            self.chain(f, df, d2f)
        } else {
            self.chain(
                a.powf(c),
                c * a.powf(c - 1.0),
                c * (c - 1.0) * a.powf(c - 2.0),
            )
        }
    }
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn sqrt(self) -> Expr {
        Expr::Call(Func::Sqrt, Box::new(self))
    }

    pub fn exp(self) -> Expr {
        Expr::Call(Func::Exp, Box::new(self))
    }

    pub fn sin(self) -> Expr {
        Expr::Call(Func::Sin, Box::new(self))
    }

    pub fn cos(self) -> Expr {
        Expr::Call(Func::Cos, Box::new(self))
    }

    pub fn powf(self, c: f64) -> Expr {
        Expr::Pow(Box::new(self), Box::new(Expr::Const(c)))
    }

    pub fn norm(args: Vec<Expr>) -> Expr {
        Expr::Norm(args)
    }

    /// Euclidean norm of the variables `range`.
    pub fn norm_of_vars(range: std::ops::Range<usize>) -> Expr {
        Expr::Norm(range.map(Expr::Var).collect())
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
            Expr::Norm(args) => args.iter().filter_map(Expr::max_var).max(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => {
                let base = a.eval(x);
                match **b {
                    Expr::Const(c) if c.fract() == 0.0 && c.abs() < 64.0 => base.powi(c as i32),
                    _ => base.powf(b.eval(x)),
                }
            }
            Expr::Call(f, a) => f.eval3(a.eval(x)).0,
            Expr::Norm(args) => args
                .iter()
                .map(|e| {
                    let v = e.eval(x);
                    v * v
                })
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Value, gradient and Hessian at `x`.
    pub fn jet(&self, x: &[f64]) -> Jet {
        let n = x.len();
        match self {
            Expr::Const(c) => Jet::constant(*c, n),
            Expr::Var(i) => Jet::variable(x[*i], *i, n),
            Expr::Neg(a) => a.jet(x).scale(-1.0),
            Expr::Add(a, b) => a.jet(x).plus(&b.jet(x)),
            Expr::Sub(a, b) => a.jet(x).minus(&b.jet(x)),
            Expr::Mul(a, b) => a.jet(x).mul(&b.jet(x)),
            Expr::Div(a, b) => a.jet(x).mul(&b.jet(x).recip()),
            Expr::Pow(a, b) => match **b {
                Expr::Const(c) => a.jet(x).powf(c),
                _ => {
                    // a^b = exp(b ln a)
                    let la = a.jet(x);
                    let ln = la.chain(la.value.ln(), 1.0 / la.value, -1.0 / (la.value * la.value));
                    let prod = b.jet(x).mul(&ln);
                    let e = prod.value.exp();
                    prod.chain(e, e, e)
                }
            },
            Expr::Call(f, a) => {
                let ja = a.jet(x);
                let (v, d1, d2) = f.eval3(ja.value);
                ja.chain(v, d1, d2)
            }
            Expr::Norm(args) => {
                let mut acc = Jet::constant(0.0, n);
                for e in args {
                    let j = e.jet(x);
                    acc = acc.plus(&j.mul(&j));
                }
                acc.powf(0.5)
            }
        }
    }

    /// Parses an expression. Variables are `x0, x1, ...`; `t` aliases `x0`
    /// and `y<k>` aliases `x<k>`.
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Parse(format!(
                "unexpected trailing input in `{src}` at token {}",
                p.pos
            )));
        }
        Ok(e)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Norm(args) => {
                write!(f, "norm(")?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl $trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$variant(Box::new(self), Box::new(rhs))
            }
        }
        impl $trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::$variant(Box::new(self), Box::new(Expr::Const(rhs)))
            }
        }
        impl $trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$variant(Box::new(Expr::Const(self)), Box::new(rhs))
            }
        }
    };
}

binop!(Add, add, Add);
binop!(Sub, sub, Sub);
binop!(Mul, mul, Mul);
binop!(Div, div, Div);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let save = i;
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                if i < chars.len() && chars[i].is_ascii_digit() {
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number `{s}`")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Parse(format!("unexpected character `{c}` in `{src}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Token::Op(c)) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.peek_op() == Some(op) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Parse(format!("expected `{op}` at token {}", self.pos)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' { lhs + rhs } else { lhs - rhs };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' { lhs * rhs } else { lhs / rhs };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(-self.unary()?)
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn args(&mut self) -> Result<Vec<Expr>> {
        self.expect('(')?;
        let mut args = vec![self.expr()?];
        while self.peek_op() == Some(',') {
            self.pos += 1;
            args.push(self.expr()?);
        }
        self.expect(')')?;
        Ok(args)
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::Parse("unexpected end of expression".into()))?;
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Expr::Const(v)),
            Token::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Token::Op(c) => Err(Error::Parse(format!("unexpected `{c}`"))),
            Token::Ident(name) => {
                if self.peek_op() == Some('(') {
                    let mut args = self.args()?;
                    let func = match name.as_str() {
                        "norm" => return Ok(Expr::Norm(args)),
                        "sqrt" => Func::Sqrt,
                        "exp" => Func::Exp,
                        "log" | "ln" => Func::Log,
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        _ => return Err(Error::Parse(format!("unknown function `{name}`"))),
                    };
                    if args.len() != 1 {
                        return Err(Error::Parse(format!("`{name}` takes one argument")));
                    }
                    return Ok(Expr::Call(func, Box::new(args.remove(0))));
                }
                resolve_ident(&name)
            }
        }
    }
}

fn resolve_ident(name: &str) -> Result<Expr> {
    if name == "t" {
        return Ok(Expr::Var(0));
    }
    if name == "pi" {
        return Ok(Expr::Const(std::f64::consts::PI));
    }
    for prefix in ["x", "y"] {
        if let Some(rest) = name.strip_prefix(prefix) {
            if let Ok(k) = rest.parse::<usize>() {
                return Ok(Expr::Var(k));
            }
        }
    }
    Err(Error::Parse(format!("unknown identifier `{name}`")))
}
