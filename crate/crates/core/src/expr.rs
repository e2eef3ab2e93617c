//! Polynomial expression graphs for flows and observation maps.
//!
//! Text form is prefix notation:
//!
//! ```text
//! (sub (mul x0 (sub 28 x2)) x1)
//! (add (scale 2.5 x0) (pow x1 3))
//! ```
//!
//! `add` and `mul` accept two or more arguments, `sub` exactly two, `neg` one,
//! `scale` a numeric literal followed by an expression, and `pow` an
//! expression followed by a non-negative integer.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::jet::Ring;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Scale(f64, Arc<Expr>),
    Pow(Arc<Expr>, u32),
}

impl Expr {
    pub fn var(i: usize) -> Self {
        Expr::Var(i)
    }

    pub fn constant(c: f64) -> Self {
        Expr::Const(c)
    }

    pub fn add(a: Expr, b: Expr) -> Self {
        Expr::Add(Arc::new(a), Arc::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Self {
        Expr::Sub(Arc::new(a), Arc::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Self {
        Expr::Mul(Arc::new(a), Arc::new(b))
    }

    pub fn scale(c: f64, a: Expr) -> Self {
        Expr::Scale(c, Arc::new(a))
    }

    pub fn pow(a: Expr, k: u32) -> Self {
        Expr::Pow(Arc::new(a), k)
    }

    /// Left fold of `terms` with `add`; a single term is returned as is.
    pub fn sum(terms: Vec<Expr>) -> Self {
        let mut it = terms.into_iter();
        let first = it.next().unwrap_or(Expr::Const(0.0));
        it.fold(first, Expr::add)
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
            Expr::Scale(_, a) | Expr::Pow(a, _) => a.max_var(),
        }
    }

    /// Checks that only variables `0..num_vars` occur and constants are finite.
    pub fn validate(&self, num_vars: usize) -> Result<()> {
        match self {
            Expr::Const(c) | Expr::Scale(c, _) if !c.is_finite() => {
                return Err(Error::UnsupportedOperation(format!("non-finite constant {c}")))
            }
            _ => {}
        }
        match self {
            Expr::Const(_) => Ok(()),
            Expr::Var(i) if *i < num_vars => Ok(()),
            Expr::Var(i) => Err(Error::UnsupportedOperation(format!(
                "variable x{i} out of range for a {num_vars}-dimensional state"
            ))),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.validate(num_vars)?;
                b.validate(num_vars)
            }
            Expr::Scale(_, a) | Expr::Pow(a, _) => a.validate(num_vars),
        }
    }

    /// Evaluates over any [`Ring`]. `vars` must be non-empty and cover every referenced variable.
    pub fn eval<R: Ring>(&self, vars: &[R]) -> R {
        match self {
            Expr::Const(c) => vars[0].constant_like(*c),
            Expr::Var(i) => vars[*i].clone(),
            Expr::Add(a, b) => a.eval(vars) + b.eval(vars),
            Expr::Sub(a, b) => a.eval(vars) - b.eval(vars),
            Expr::Mul(a, b) => a.eval(vars) * b.eval(vars),
            Expr::Scale(c, a) => a.eval(vars).scale(*c),
            Expr::Pow(a, k) => {
                let base = a.eval(vars);
                let mut acc = base.constant_like(1.0);
                let mut b = base;
                let mut e = *k;
                while e > 0 {
                    if e & 1 == 1 {
                        acc = acc * b.clone();
                    }
                    e >>= 1;
                    if e > 0 {
                        b = b.clone() * b;
                    }
                }
                acc
            }
        }
    }

    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src);
        let mut pos = 0;
        let e = parse_expr(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(parse_error(format!("trailing input after position {pos}")));
        }
        Ok(e)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Add(a, b) => write!(f, "(add {a} {b})"),
            Expr::Sub(a, b) => write!(f, "(sub {a} {b})"),
            Expr::Mul(a, b) => write!(f, "(mul {a} {b})"),
            Expr::Scale(c, a) => write!(f, "(scale {c} {a})"),
            Expr::Pow(a, k) => write!(f, "(pow {a} {k})"),
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn parse_error(msg: String) -> Error {
    Error::UnsupportedOperation(msg)
}

fn tokenize(src: &str) -> Vec<String> {
    src.replace('(', " ( ")
        .replace(')', " ) ")
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

fn parse_expr(tokens: &[String], pos: &mut usize) -> Result<Expr> {
    let tok = tokens
        .get(*pos)
        .ok_or_else(|| parse_error("unexpected end of expression".into()))?;
    *pos += 1;
    match tok.as_str() {
        "(" => {
            let head = tokens
                .get(*pos)
                .ok_or_else(|| parse_error("missing operator after '('".into()))?
                .clone();
            *pos += 1;
            let mut args = Vec::new();
            while tokens.get(*pos).map(String::as_str) != Some(")") {
                if *pos >= tokens.len() {
                    return Err(parse_error("unbalanced parentheses".into()));
                }
                args.push(parse_expr(tokens, pos)?);
            }
            *pos += 1;
            build(&head, args)
        }
        ")" => Err(parse_error("unexpected ')'".into())),
        atom => parse_atom(atom),
    }
}

fn parse_atom(atom: &str) -> Result<Expr> {
    if let Some(idx) = atom.strip_prefix('x') {
        return idx
            .parse::<usize>()
            .map(Expr::Var)
            .map_err(|_| parse_error(format!("bad variable name '{atom}'")));
    }
    atom.parse::<f64>()
        .ok()
        .filter(|c| c.is_finite())
        .map(Expr::Const)
        .ok_or_else(|| parse_error(format!("unknown token '{atom}'")))
}

fn build(head: &str, args: Vec<Expr>) -> Result<Expr> {
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(parse_error(format!("'{head}' takes {n} arguments, got {}", args.len())))
        }
    };
    let literal = |e: &Expr| match e {
        Expr::Const(c) => Ok(*c),
        _ => Err(parse_error(format!("'{head}' needs a numeric literal"))),
    };
    match head {
        "add" | "mul" => {
            if args.len() < 2 {
                return Err(parse_error(format!("'{head}' takes at least 2 arguments")));
            }
            let op = if head == "add" { Expr::add } else { Expr::mul };
            let mut it = args.into_iter();
            let first = it.next().expect("checked length");
            Ok(it.fold(first, op))
        }
        "sub" => {
            arity(2)?;
            let mut it = args.into_iter();
            Ok(Expr::sub(it.next().unwrap(), it.next().unwrap()))
        }
        "neg" => {
            arity(1)?;
            Ok(Expr::scale(-1.0, args.into_iter().next().unwrap()))
        }
        "scale" => {
            arity(2)?;
            let c = literal(&args[0])?;
            Ok(Expr::scale(c, args.into_iter().nth(1).unwrap()))
        }
        "pow" => {
            arity(2)?;
            let k = literal(&args[1])?;
            if k < 0.0 || k.fract() != 0.0 || k > u32::MAX as f64 {
                return Err(parse_error(format!(
                    "'pow' needs a non-negative integer exponent, got {k}"
                )));
            }
            Ok(Expr::pow(args.into_iter().next().unwrap(), k as u32))
        }
        other => Err(parse_error(format!("unknown operator '{other}'"))),
    }
}
