//! Small arithmetic language for scenario fields.
//!
//! Grammar: `+ - * / ^`, parentheses, the functions `sin cos exp log sqrt abs`,
//! coordinates `u1..u8`, numeric literals, `pi`, `e` and caller-supplied named
//! constants. `^` is right associative and binds tighter than unary minus.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::jets::{Jet, MAX_VARS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

fn fail(msg: &str) -> Error {
    Error::EvaluationFailure(msg.to_string())
}

impl Expr {
    /// Largest coordinate index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn eval(&self, u: &[f64]) -> Result<f64> {
        let r = match self {
            Expr::Num(x) => *x,
            Expr::Var(i) => u[*i],
            Expr::Neg(a) => -a.eval(u)?,
            Expr::Add(a, b) => a.eval(u)? + b.eval(u)?,
            Expr::Sub(a, b) => a.eval(u)? - b.eval(u)?,
            Expr::Mul(a, b) => a.eval(u)? * b.eval(u)?,
            Expr::Div(a, b) => {
                let d = b.eval(u)?;
                if d == 0.0 {
                    return Err(fail("division by zero"));
                }
                a.eval(u)? / d
            }
            Expr::Pow(a, b) => {
                let x = a.eval(u)?;
                match integer_exponent(b) {
                    Some(k) => {
                        if x == 0.0 && k < 0 {
                            return Err(fail("negative power of zero"));
                        }
                        x.powi(k)
                    }
                    None => {
                        if x < 0.0 {
                            return Err(fail("real power of a negative base"));
                        }
                        x.powf(b.eval(u)?)
                    }
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval(u)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Log if x > 0.0 => x.ln(),
                    Func::Log => return Err(fail("log of a non-positive value")),
                    Func::Sqrt if x >= 0.0 => x.sqrt(),
                    Func::Sqrt => return Err(fail("sqrt of a negative value")),
                    Func::Abs => x.abs(),
                }
            }
        };
        if r.is_finite() {
            Ok(r)
        } else {
            Err(fail("non-finite value"))
        }
    }

    pub fn eval_jet(&self, u: &[Jet]) -> Result<Jet> {
        Ok(match self {
            Expr::Num(x) => u[0].constant_like(*x),
            Expr::Var(i) => u[*i].clone(),
            Expr::Neg(a) => -a.eval_jet(u)?,
            Expr::Add(a, b) => a.eval_jet(u)? + b.eval_jet(u)?,
            Expr::Sub(a, b) => a.eval_jet(u)? - b.eval_jet(u)?,
            Expr::Mul(a, b) => {
                if let Expr::Num(x) = **a {
                    b.eval_jet(u)? * x
                } else if let Expr::Num(x) = **b {
                    a.eval_jet(u)? * x
                } else {
                    a.eval_jet(u)? * b.eval_jet(u)?
                }
            }
            Expr::Div(a, b) => {
                if let Expr::Num(x) = **b {
                    if x == 0.0 {
                        return Err(fail("division by zero"));
                    }
                    a.eval_jet(u)? * (1.0 / x)
                } else {
                    a.eval_jet(u)? * b.eval_jet(u)?.recip()?
                }
            }
            Expr::Pow(a, b) => {
                let x = a.eval_jet(u)?;
                match integer_exponent(b) {
                    Some(k) => x.powi(k)?,
                    None => match **b {
                        Expr::Num(r) => x.powf(r)?,
                        _ => (b.eval_jet(u)? * x.ln()?).exp(),
                    },
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval_jet(u)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Log => x.ln()?,
                    Func::Sqrt => x.sqrt()?,
                    Func::Abs => x.abs()?,
                }
            }
        })
    }
}

fn integer_exponent(e: &Expr) -> Option<i32> {
    let v = match e {
        Expr::Num(x) => *x,
        Expr::Neg(a) => match **a {
            Expr::Num(x) => -x,
            _ => return None,
        },
        _ => return None,
    };
    (v.fract() == 0.0 && v.abs() <= 64.0).then_some(v as i32)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    consts: &'a BTreeMap<String, f64>,
}

impl<'a> Parser<'a> {
    fn error(&self, at: usize, message: impl Into<String>) -> Error {
        let before = &self.src[..at.min(self.src.len())];
        let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
        let column = at - before.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1) + 1;
        Error::Parse {
            line,
            column,
            message: message.into(),
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

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                b'-' => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.peek() {
            match c {
                b'*' => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                b'/' => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let start = {
            self.skip_ws();
            self.pos
        };
        match self.peek() {
            None => Err(self.error(start, "unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error(self.pos, "expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(start),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                if let Some(f) = Func::from_name(name) {
                    if self.peek() != Some(b'(') {
                        return Err(self.error(self.pos, format!("expected '(' after {name}")));
                    }
                    self.pos += 1;
                    let arg = self.expr()?;
                    if self.peek() != Some(b')') {
                        return Err(self.error(self.pos, "expected ')'"));
                    }
                    self.pos += 1;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                if let Some(rest) = name.strip_prefix('u') {
                    if let Ok(k) = rest.parse::<usize>() {
                        if (1..=MAX_VARS).contains(&k) {
                            return Ok(Expr::Var(k - 1));
                        }
                        return Err(self.error(start, format!("coordinate {name} out of range u1..u{MAX_VARS}")));
                    }
                }
                if let Some(v) = self.consts.get(name) {
                    return Ok(Expr::Num(*v));
                }
                match name {
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    "e" => Ok(Expr::Num(std::f64::consts::E)),
                    _ => Err(self.error(start, format!("unknown symbol '{name}'"))),
                }
            }
            Some(c) => Err(self.error(start, format!("unexpected character '{}'", c as char))),
        }
    }

    fn number(&mut self, start: usize) -> Result<Expr> {
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let mut p = self.pos + 1;
            if p < s.len() && (s[p] == b'+' || s[p] == b'-') {
                p += 1;
            }
            if p < s.len() && s[p].is_ascii_digit() {
                while p < s.len() && s[p].is_ascii_digit() {
                    p += 1;
                }
                self.pos = p;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap_or("");
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| self.error(start, format!("malformed number '{text}'")))
    }
}

/// Parses `src` with the given named constants.
pub fn parse_with(src: &str, consts: &BTreeMap<String, f64>) -> Result<Expr> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
        consts,
    };
    let e = p.expr()?;
    if let Some(c) = p.peek() {
        return Err(p.error(p.pos, format!("unexpected '{}'", c as char)));
    }
    Ok(e)
}

pub fn parse(src: &str) -> Result<Expr> {
    parse_with(src, &BTreeMap::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let e = parse("1 + 2*3^2 - -u1").unwrap();
        assert_eq!(e.eval(&[4.0]).unwrap(), 1.0 + 18.0 + 4.0);
        let e = parse("-u1^2").unwrap();
        assert_eq!(e.eval(&[3.0]).unwrap(), -9.0);
        let e = parse("2^3^2").unwrap();
        assert_eq!(e.eval(&[]).unwrap(), 512.0);
    }

    #[test]
    fn functions_and_constants() {
        let mut c = BTreeMap::new();
        c.insert("M".to_string(), 2.0);
        let e = parse_with("sqrt(abs(u1)) * exp(0) + log(e) + M*cos(pi)", &c).unwrap();
        assert!((e.eval(&[-4.0]).unwrap() - (2.0 + 1.0 - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn error_column() {
        match parse("sin(") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (1, 5)),
            other => panic!("unexpected {other:?}"),
        }
        match parse("u1 +\n  * 2") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("u9"), Err(Error::Parse { .. })));
        assert!(matches!(parse("foo(u1)"), Err(Error::Parse { .. })));
    }

    #[test]
    fn jet_matches_value() {
        let e = parse("u1^2*sin(u2) / (1 + u1*u2) + u2^1.5").unwrap();
        let p = [0.7, 1.3];
        let j = e.eval_jet(&Jet::variables(&p, 3)).unwrap();
        assert!((j.value() - e.eval(&p).unwrap()).abs() < 1e-14);
    }
}
