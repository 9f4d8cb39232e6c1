//! Analytic expressions: parsing, printing, symbolic differentiation and
//! evaluation over any [`Ring`] (plain `f64` or [`Jet`]).

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::jet::{Analytic, Jet, JetError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Sinh,
    Cosh,
    Tanh,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn analytic(self) -> Analytic {
        match self {
            Func::Sin => Analytic::Sin,
            Func::Cos => Analytic::Cos,
            Func::Tan => Analytic::Tan,
            Func::Exp => Analytic::Exp,
            Func::Ln => Analytic::Ln,
            Func::Sqrt => Analytic::Sqrt,
            Func::Sinh => Analytic::Sinh,
            Func::Cosh => Analytic::Cosh,
            Func::Tanh => Analytic::Tanh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NamedConst {
    Pi,
    E,
}

impl NamedConst {
    pub fn value(self) -> f64 {
        match self {
            NamedConst::Pi => std::f64::consts::PI,
            NamedConst::E => std::f64::consts::E,
        }
    }
}

/// Expression tree. `Pow` only ever carries an integer exponent; other
/// exponents are lowered to `exp(ln(base) * exponent)` by the parser.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Const(NamedConst),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at offset {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("variable `{0}` is not bound")]
    MissingVariable(String),
    #[error(transparent)]
    Jet(#[from] JetError),
}

// ---------------------------------------------------------------------------
// construction helpers with the light constant folding used by `diff`

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    fn as_num(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Num(v) => Expr::Num(-v),
            Expr::Neg(inner) => *inner,
            a => Expr::Neg(Box::new(a)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Expr::Num(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Expr::Num(x - y),
            (Some(x), _) if x == 0.0 => Expr::neg(b),
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Expr::Num(x * y),
            (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Num(0.0),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => Expr::neg(b),
            (_, Some(y)) if y == -1.0 => Expr::neg(a),
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) if y != 0.0 => Expr::Num(x / y),
            (Some(x), _) if x == 0.0 => Expr::Num(0.0),
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn powi(a: Expr, n: i32) -> Expr {
        match (n, a.as_num()) {
            (0, _) => Expr::Num(1.0),
            (1, _) => a,
            (_, Some(x)) => Expr::Num(x.powi(n)),
            _ => Expr::Pow(Box::new(a), n),
        }
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        Expr::Call(f, Box::new(a))
    }

    /// Variables occurring in the tree, sorted.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) | Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }
}

// ---------------------------------------------------------------------------
// symbolic differentiation

impl Expr {
    /// Partial derivative with respect to `v`.
    pub fn diff(&self, v: &str) -> Expr {
        match self {
            Expr::Num(_) | Expr::Const(_) => Expr::Num(0.0),
            Expr::Var(name) => Expr::Num(if name == v { 1.0 } else { 0.0 }),
            Expr::Neg(a) => Expr::neg(a.diff(v)),
            Expr::Add(a, b) => Expr::add(a.diff(v), b.diff(v)),
            Expr::Sub(a, b) => Expr::sub(a.diff(v), b.diff(v)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.diff(v), (**b).clone()),
                Expr::mul((**a).clone(), b.diff(v)),
            ),
            Expr::Div(a, b) => {
                let da = a.diff(v);
                let db = b.diff(v);
                Expr::sub(
                    Expr::div(da, (**b).clone()),
                    Expr::div(Expr::mul((**a).clone(), db), Expr::powi((**b).clone(), 2)),
                )
            }
            Expr::Pow(a, n) => {
                if *n == 0 {
                    return Expr::Num(0.0);
                }
                let outer = Expr::mul(Expr::Num(*n as f64), Expr::powi((**a).clone(), n - 1));
                Expr::mul(outer, a.diff(v))
            }
            Expr::Call(f, a) => {
                let da = a.diff(v);
                if da.is_zero() {
                    return Expr::Num(0.0);
                }
                let inner = (**a).clone();
                match f {
                    Func::Sin => Expr::mul(Expr::call(Func::Cos, inner), da),
                    Func::Cos => Expr::mul(Expr::neg(Expr::call(Func::Sin, inner)), da),
                    Func::Tan => Expr::div(da, Expr::powi(Expr::call(Func::Cos, inner), 2)),
                    Func::Exp => Expr::mul(self.clone(), da),
                    Func::Ln => Expr::div(da, inner),
                    Func::Sqrt => Expr::div(da, Expr::mul(Expr::Num(2.0), self.clone())),
                    Func::Sinh => Expr::mul(Expr::call(Func::Cosh, inner), da),
                    Func::Cosh => Expr::mul(Expr::call(Func::Sinh, inner), da),
                    Func::Tanh => Expr::div(da, Expr::powi(Expr::call(Func::Cosh, inner), 2)),
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// printing with minimal parentheses

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => PREC_NEG,
            Expr::Num(_) | Expr::Var(_) | Expr::Const(_) | Expr::Call(..) => PREC_ATOM,
            Expr::Neg(_) => PREC_NEG,
            Expr::Add(..) | Expr::Sub(..) => PREC_ADD,
            Expr::Mul(..) | Expr::Div(..) => PREC_MUL,
            Expr::Pow(..) => PREC_POW,
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "(")?;
            self.write_at(f, 0)?;
            return write!(f, ")");
        }
        match self {
            Expr::Num(v) => {
                if v.is_sign_negative() {
                    write!(f, "-{}", -v)
                } else {
                    write!(f, "{}", v)
                }
            }
            Expr::Var(name) => write!(f, "{}", name),
            Expr::Const(NamedConst::Pi) => write!(f, "pi"),
            Expr::Const(NamedConst::E) => write!(f, "e"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                a.write_at(f, PREC_NEG)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                a.write_at(f, PREC_ADD)?;
                write!(f, "{}", if matches!(self, Expr::Add(..)) { "+" } else { "-" })?;
                b.write_at(f, PREC_ADD + 1)
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.write_at(f, PREC_MUL)?;
                write!(f, "{}", if matches!(self, Expr::Mul(..)) { "*" } else { "/" })?;
                b.write_at(f, PREC_MUL + 1)
            }
            Expr::Pow(a, n) => {
                a.write_at(f, PREC_ATOM)?;
                if *n < 0 {
                    write!(f, "^({})", n)
                } else {
                    write!(f, "^{}", n)
                }
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write_at(f, 0)?;
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}

// ---------------------------------------------------------------------------
// parsing

pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    if p.pos == p.src.len() {
        return Err(p.error("empty expression"));
    }
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        let msg = if p.peek() == Some(b')') {
            "unbalanced parenthesis"
        } else {
            "unexpected character"
        };
        return Err(p.error(msg));
    }
    Ok(e)
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Expr, ParseError> {
        parse_expr(s)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ParseError {
        ParseError {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    // unary minus binds looser than `^`, so `-x^2` is `-(x^2)`
    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let exponent = self.unary()?;
        Ok(lower_power(base, exponent))
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("unbalanced parenthesis"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Parser| {
            let s = p.pos;
            while matches!(p.peek(), Some(c) if c.is_ascii_digit()) {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.peek() == Some(b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            self.pos = start;
            return Err(self.error("malformed number"));
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                // not an exponent: leave `e` for the caller
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| ParseError {
                offset: start,
                message: "malformed number".into(),
            })
    }

    fn ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let after = self.pos;
        self.skip_ws();
        if self.peek() == Some(b'(') {
            let func = Func::from_name(name).ok_or_else(|| ParseError {
                offset: start,
                message: format!("unknown function `{}`", name),
            })?;
            self.pos += 1;
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.error("unbalanced parenthesis"));
            }
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        self.pos = after;
        Ok(match name {
            "pi" => Expr::Const(NamedConst::Pi),
            "e" => Expr::Const(NamedConst::E),
            _ => Expr::Var(name.to_string()),
        })
    }
}

/// Integer constant exponents stay exact; anything else becomes `exp(ln(base)*exponent)`.
fn lower_power(base: Expr, exponent: Expr) -> Expr {
    if exponent.variables().is_empty() {
        if let Ok(value) = exponent.eval(&Env::<f64>::new(())) {
            if value.fract() == 0.0 && value.abs() <= i32::MAX as f64 {
                return Expr::Pow(Box::new(base), value as i32);
            }
        }
    }
    Expr::Call(
        Func::Exp,
        Box::new(Expr::Mul(
            Box::new(Expr::Call(Func::Ln, Box::new(base))),
            Box::new(exponent),
        )),
    )
}

// ---------------------------------------------------------------------------
// evaluation

/// Commutative ring with the elementary functions needed by [`Expr::eval`].
///
/// `Ctx` carries what is needed to embed a real constant (the jet order for
/// [`Jet`], nothing for `f64`).
pub trait Ring: Clone {
    type Ctx: Copy;
    fn lift(c: f64, ctx: Self::Ctx) -> Self;
    fn add(&self, rhs: &Self) -> Result<Self, EvalError>;
    fn sub(&self, rhs: &Self) -> Result<Self, EvalError>;
    fn mul(&self, rhs: &Self) -> Result<Self, EvalError>;
    fn div(&self, rhs: &Self) -> Result<Self, EvalError>;
    fn neg(&self) -> Self;
    fn apply(&self, f: Func) -> Result<Self, EvalError>;
}

/// Integer power by repeated squaring, shared by every ring so that results
/// agree bit-for-bit across rings.
fn ring_powi<T: Ring>(x: &T, n: i32, ctx: T::Ctx) -> Result<T, EvalError> {
    let mut base = x.clone();
    let mut acc: Option<T> = None;
    let mut e = n.unsigned_abs();
    while e > 0 {
        if e & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(a) => a.mul(&base)?,
            });
        }
        e >>= 1;
        if e > 0 {
            base = base.mul(&base)?;
        }
    }
    let acc = acc.unwrap_or_else(|| T::lift(1.0, ctx));
    if n < 0 {
        T::lift(1.0, ctx).div(&acc)
    } else {
        Ok(acc)
    }
}

fn domain(function: &'static str, value: f64) -> EvalError {
    EvalError::Jet(JetError::Domain { function, value })
}

impl Ring for f64 {
    type Ctx = ();
    fn lift(c: f64, _: ()) -> f64 {
        c
    }
    fn add(&self, rhs: &f64) -> Result<f64, EvalError> {
        Ok(self + rhs)
    }
    fn sub(&self, rhs: &f64) -> Result<f64, EvalError> {
        Ok(self - rhs)
    }
    fn mul(&self, rhs: &f64) -> Result<f64, EvalError> {
        Ok(self * rhs)
    }
    fn div(&self, rhs: &f64) -> Result<f64, EvalError> {
        if *rhs == 0.0 {
            return Err(EvalError::Jet(JetError::ZeroDivisor));
        }
        Ok(self / rhs)
    }
    fn neg(&self) -> f64 {
        -self
    }
    // domain rules mirror the order-0 behaviour of the jet recurrences
    fn apply(&self, f: Func) -> Result<f64, EvalError> {
        let x = *self;
        Ok(match f {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => {
                if x.cos().abs() < 1e-12 {
                    return Err(domain("tan", x));
                }
                x.tan()
            }
            Func::Exp => x.exp(),
            Func::Ln => {
                if x <= 0.0 {
                    return Err(domain("ln", x));
                }
                x.ln()
            }
            Func::Sqrt => {
                if x < 0.0 {
                    return Err(domain("sqrt", x));
                }
                x.sqrt()
            }
            Func::Sinh => x.sinh(),
            Func::Cosh => x.cosh(),
            Func::Tanh => x.tanh(),
        })
    }
}

impl Ring for Jet {
    type Ctx = usize;
    fn lift(c: f64, order: usize) -> Jet {
        Jet::constant(c, order)
    }
    fn add(&self, rhs: &Jet) -> Result<Jet, EvalError> {
        Ok(self.checked_add(rhs)?)
    }
    fn sub(&self, rhs: &Jet) -> Result<Jet, EvalError> {
        Ok(self.checked_sub(rhs)?)
    }
    fn mul(&self, rhs: &Jet) -> Result<Jet, EvalError> {
        Ok(self.checked_mul(rhs)?)
    }
    fn div(&self, rhs: &Jet) -> Result<Jet, EvalError> {
        Ok(self.checked_div(rhs)?)
    }
    fn neg(&self) -> Jet {
        -self
    }
    fn apply(&self, f: Func) -> Result<Jet, EvalError> {
        Ok(Jet::apply(self, f.analytic())?)
    }
}

/// Variable bindings for evaluation.
#[derive(Debug, Clone)]
pub struct Env<T: Ring> {
    ctx: T::Ctx,
    vars: HashMap<String, T>,
}

impl<T: Ring> Env<T> {
    pub fn new(ctx: T::Ctx) -> Self {
        Env {
            ctx,
            vars: HashMap::new(),
        }
    }

    pub fn with(mut self, name: &str, value: T) -> Self {
        self.vars.insert(name.to_string(), value);
        self
    }

    pub fn set(&mut self, name: &str, value: T) {
        self.vars.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<&T> {
        self.vars.get(name)
    }

    pub fn ctx(&self) -> T::Ctx {
        self.ctx
    }
}

impl Expr {
    pub fn eval<T: Ring>(&self, env: &Env<T>) -> Result<T, EvalError> {
        Ok(match self {
            Expr::Num(v) => T::lift(*v, env.ctx),
            Expr::Const(c) => T::lift(c.value(), env.ctx),
            Expr::Var(name) => env
                .vars
                .get(name)
                .cloned()
                .ok_or_else(|| EvalError::MissingVariable(name.clone()))?,
            Expr::Neg(a) => a.eval(env)?.neg(),
            Expr::Add(a, b) => a.eval(env)?.add(&b.eval(env)?)?,
            Expr::Sub(a, b) => a.eval(env)?.sub(&b.eval(env)?)?,
            Expr::Mul(a, b) => a.eval(env)?.mul(&b.eval(env)?)?,
            Expr::Div(a, b) => a.eval(env)?.div(&b.eval(env)?)?,
            Expr::Pow(a, n) => ring_powi(&a.eval(env)?, *n, env.ctx)?,
            Expr::Call(f, a) => a.eval(env)?.apply(*f)?,
        })
    }
}
