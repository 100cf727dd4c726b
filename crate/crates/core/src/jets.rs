//! Truncated multivariate Taylor polynomials ("jets").
//!
//! A [`Jet`] of order `p` in `n` variables stores the Taylor coefficients
//! `c_α` of every monomial `t^α` with `|α| ≤ p`, so that the partial
//! derivative `∂^α f` at the base point equals `α! c_α`. Arithmetic is exact
//! truncated polynomial arithmetic; transcendental functions are applied by
//! composing their one-dimensional Taylor series with the non-constant part.
//!
//! Monomials are stored in graded order, so a jet of order `p` is a prefix of
//! the same jet at any higher order. Index tables are built once per variable
//! count and shared.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Highest supported jet order.
pub const MAX_ORDER: usize = 5;
/// Highest supported number of variables.
pub const MAX_VARS: usize = 8;

type Exponent = [u8; MAX_VARS];

pub struct Table {
    nvars: usize,
    exps: Vec<Exponent>,
    degree: Vec<u8>,
    len: [usize; MAX_ORDER + 1],
    index: HashMap<Exponent, u32>,
    mul: Vec<(u32, u32, u32)>,
    mul_end: [usize; MAX_ORDER + 1],
    deriv: Vec<Vec<(u32, u32, f64)>>,
    deriv_end: Vec<[usize; MAX_ORDER + 1]>,
    weight: Vec<f64>,
}

fn push_monomials(nvars: usize, deg: usize, var: usize, cur: &mut Exponent, out: &mut Vec<Exponent>) {
    if var + 1 == nvars {
        cur[var] = deg as u8;
        out.push(*cur);
        cur[var] = 0;
        return;
    }
    for k in (0..=deg).rev() {
        cur[var] = k as u8;
        push_monomials(nvars, deg - k, var + 1, cur, out);
    }
    cur[var] = 0;
}

impl Table {
    fn build(nvars: usize) -> Table {
        let mut exps = Vec::new();
        let mut len = [0usize; MAX_ORDER + 1];
        for d in 0..=MAX_ORDER {
            if nvars == 0 {
                if d == 0 {
                    exps.push([0u8; MAX_VARS]);
                }
            } else {
                push_monomials(nvars, d, 0, &mut [0u8; MAX_VARS], &mut exps);
            }
            len[d] = exps.len();
        }
        let degree: Vec<u8> = exps.iter().map(|e| e.iter().sum()).collect();
        let index: HashMap<Exponent, u32> = exps.iter().enumerate().map(|(i, e)| (*e, i as u32)).collect();

        let mut mul = Vec::new();
        for (i, ei) in exps.iter().enumerate() {
            for (j, ej) in exps.iter().enumerate() {
                if degree[i] as usize + degree[j] as usize > MAX_ORDER {
                    continue;
                }
                let mut e = [0u8; MAX_VARS];
                for v in 0..MAX_VARS {
                    e[v] = ei[v] + ej[v];
                }
                mul.push((i as u32, j as u32, index[&e]));
            }
        }
        mul.sort_by_key(|&(_, _, k)| degree[k as usize]);
        let mut mul_end = [0usize; MAX_ORDER + 1];
        for o in 0..=MAX_ORDER {
            mul_end[o] = mul.iter().filter(|&&(_, _, k)| degree[k as usize] as usize <= o).count();
        }

        let mut deriv = Vec::with_capacity(nvars);
        let mut deriv_end = Vec::with_capacity(nvars);
        for v in 0..nvars {
            let mut d = Vec::new();
            for (src, e) in exps.iter().enumerate() {
                if e[v] == 0 {
                    continue;
                }
                let mut lowered = *e;
                lowered[v] -= 1;
                d.push((src as u32, index[&lowered], e[v] as f64));
            }
            d.sort_by_key(|&(_, dst, _)| dst);
            let mut end = [0usize; MAX_ORDER + 1];
            for o in 0..=MAX_ORDER {
                end[o] = d.iter().filter(|&&(_, dst, _)| degree[dst as usize] as usize <= o).count();
            }
            deriv.push(d);
            deriv_end.push(end);
        }

        let weight = exps
            .iter()
            .map(|e| e.iter().map(|&k| (1..=k as u64).product::<u64>() as f64).product())
            .collect();

        Table {
            nvars,
            exps,
            degree,
            len,
            index,
            mul,
            mul_end,
            deriv,
            deriv_end,
            weight,
        }
    }

    pub fn get(nvars: usize) -> &'static Table {
        static TABLES: [OnceLock<Table>; MAX_VARS + 1] = [const { OnceLock::new() }; MAX_VARS + 1];
        assert!(nvars <= MAX_VARS, "at most {MAX_VARS} jet variables are supported");
        TABLES[nvars].get_or_init(|| Table::build(nvars))
    }

    /// Number of coefficients of a jet of order `order`.
    pub fn len(&self, order: usize) -> usize {
        self.len[order]
    }
}

/// Truncated Taylor expansion of a scalar about a base point.
#[derive(Clone)]
pub struct Jet {
    t: &'static Table,
    order: usize,
    c: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("nvars", &self.t.nvars)
            .field("order", &self.order)
            .field("coeffs", &self.c)
            .finish()
    }
}

impl Jet {
    pub fn constant(nvars: usize, order: usize, value: f64) -> Jet {
        let t = Table::get(nvars);
        let mut c = vec![0.0; t.len(order)];
        c[0] = value;
        Jet { t, order, c }
    }

    pub fn zero(nvars: usize, order: usize) -> Jet {
        Jet::constant(nvars, order, 0.0)
    }

    /// The coordinate function `u^var` expanded about `value`.
    pub fn var(nvars: usize, order: usize, var: usize, value: f64) -> Jet {
        let mut j = Jet::constant(nvars, order, value);
        if order > 0 {
            let mut e = [0u8; MAX_VARS];
            e[var] = 1;
            j.c[j.t.index[&e] as usize] = 1.0;
        }
        j
    }

    /// Coordinate jets for every variable of `point`.
    pub fn variables(point: &[f64], order: usize) -> Vec<Jet> {
        (0..point.len()).map(|i| Jet::var(point.len(), order, i, point[i])).collect()
    }

    pub fn nvars(&self) -> usize {
        self.t.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    /// Same nvars and order, constant value.
    pub fn constant_like(&self, value: f64) -> Jet {
        Jet::constant(self.t.nvars, self.order, value)
    }

    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.order {
            return self.clone();
        }
        Jet {
            t: self.t,
            order,
            c: self.c[..self.t.len(order)].to_vec(),
        }
    }

    /// First derivative `∂f/∂u^var`, one order lower.
    ///
    /// Panics on an order-0 jet; callers size their expansions so that this
    /// never happens.
    pub fn partial(&self, var: usize) -> Jet {
        assert!(self.order > 0, "cannot differentiate an order-0 jet");
        let o = self.order - 1;
        let mut c = vec![0.0; self.t.len(o)];
        for &(src, dst, k) in &self.t.deriv[var][..self.t.deriv_end[var][o]] {
            c[dst as usize] += k * self.c[src as usize];
        }
        Jet { t: self.t, order: o, c }
    }

    /// Partial derivative for a multi-index given as a list of variables.
    pub fn derivative(&self, vars: &[usize]) -> f64 {
        if vars.len() > self.order {
            return f64::NAN;
        }
        let mut e = [0u8; MAX_VARS];
        for &v in vars {
            e[v] += 1;
        }
        let k = self.t.index[&e] as usize;
        self.t.weight[k] * self.c[k]
    }

    /// All partial derivatives keyed by sorted multi-index.
    pub fn partials(&self) -> BTreeMap<Vec<usize>, f64> {
        let mut out = BTreeMap::new();
        for k in 0..self.c.len() {
            let mut idx = Vec::with_capacity(self.t.degree[k] as usize);
            for v in 0..self.t.nvars {
                for _ in 0..self.t.exps[k][v] {
                    idx.push(v);
                }
            }
            out.insert(idx, self.t.weight[k] * self.c[k]);
        }
        out
    }

    fn check(&self, other: &Jet) {
        assert_eq!(self.t.nvars, other.t.nvars, "jets over different variable counts");
    }

    fn mul_jet(&self, other: &Jet) -> Jet {
        self.check(other);
        let o = self.order.min(other.order);
        let mut c = vec![0.0; self.t.len(o)];
        let (a, b) = (&self.c, &other.c);
        for &(i, j, k) in &self.t.mul[..self.t.mul_end[o]] {
            c[k as usize] += a[i as usize] * b[j as usize];
        }
        Jet { t: self.t, order: o, c }
    }

    fn zip(&self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        self.check(other);
        let o = self.order.min(other.order);
        let n = self.t.len(o);
        let c = (0..n).map(|k| f(self.c[k], other.c[k])).collect();
        Jet { t: self.t, order: o, c }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            t: self.t,
            order: self.order,
            c: self.c.iter().map(|x| x * s).collect(),
        }
    }

    /// `Σ_n a_n (f − f₀)^n` for one-dimensional Taylor coefficients `a_n`.
    pub fn compose(&self, a: &[f64]) -> Jet {
        let mut h = self.clone();
        h.c[0] = 0.0;
        let top = self.order.min(a.len() - 1);
        let mut r = self.constant_like(a[top]);
        for n in (0..top).rev() {
            r = r.mul_jet(&h);
            r.c[0] += a[n];
        }
        r
    }

    pub fn recip(&self) -> Result<Jet> {
        let x = self.value();
        if x == 0.0 {
            return Err(Error::EvaluationFailure("division by zero".into()));
        }
        let mut a = Vec::with_capacity(self.order + 1);
        let mut p = 1.0 / x;
        for _ in 0..=self.order {
            a.push(p);
            p *= -1.0 / x;
        }
        Ok(self.compose(&a))
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let mut a = Vec::with_capacity(self.order + 1);
        let mut f = 1.0;
        for n in 0..=self.order {
            if n > 0 {
                f *= n as f64;
            }
            a.push(e / f);
        }
        self.compose(&a)
    }

    pub fn ln(&self) -> Result<Jet> {
        let x = self.value();
        if x <= 0.0 {
            return Err(Error::EvaluationFailure(format!("log of non-positive value {x}")));
        }
        let mut a = vec![x.ln()];
        for n in 1..=self.order {
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            a.push(sign / (n as f64 * x.powi(n as i32)));
        }
        Ok(self.compose(&a))
    }

    fn trig(&self, phase: usize) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let mut a = Vec::with_capacity(self.order + 1);
        let mut f = 1.0;
        for n in 0..=self.order {
            if n > 0 {
                f *= n as f64;
            }
            a.push(cycle[(n + phase) % 4] / f);
        }
        self.compose(&a)
    }

    pub fn sin(&self) -> Jet {
        self.trig(0)
    }

    pub fn cos(&self) -> Jet {
        self.trig(1)
    }

    /// Real power `f^r` for positive base (or zero base at order 0).
    pub fn powf(&self, r: f64) -> Result<Jet> {
        let x = self.value();
        if x < 0.0 || (x == 0.0 && self.order > 0) {
            return Err(Error::EvaluationFailure(format!("real power {r} of value {x}")));
        }
        let mut a = Vec::with_capacity(self.order + 1);
        let mut binom = 1.0;
        for n in 0..=self.order {
            if n > 0 {
                binom *= (r - (n - 1) as f64) / n as f64;
            }
            a.push(binom * x.powf(r - n as f64));
        }
        Ok(self.compose(&a))
    }

    pub fn sqrt(&self) -> Result<Jet> {
        self.powf(0.5)
    }

    pub fn powi(&self, k: i32) -> Result<Jet> {
        if k < 0 {
            return self.powi(-k)?.recip();
        }
        let mut base = self.clone();
        let mut acc = self.constant_like(1.0);
        let mut e = k as u32;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul_jet(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul_jet(&base);
            }
        }
        Ok(acc)
    }

    pub fn abs(&self) -> Result<Jet> {
        let x = self.value();
        if x > 0.0 {
            Ok(self.clone())
        } else if x < 0.0 {
            Ok(-self)
        } else if self.order == 0 {
            Ok(self.clone())
        } else {
            Err(Error::EvaluationFailure("abs is not differentiable at 0".into()))
        }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.c.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|x| x.is_finite())
    }
}

macro_rules! jet_binop {
    ($tr:ident, $m:ident, $body:expr) => {
        impl $tr<&Jet> for &Jet {
            type Output = Jet;
            fn $m(self, o: &Jet) -> Jet {
                let f: fn(&Jet, &Jet) -> Jet = $body;
                f(self, o)
            }
        }
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, o: Jet) -> Jet {
                (&self).$m(&o)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, o: &Jet) -> Jet {
                (&self).$m(o)
            }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $m(self, o: Jet) -> Jet {
                self.$m(&o)
            }
        }
    };
}

jet_binop!(Add, add, |a, b| a.zip(b, |x, y| x + y));
jet_binop!(Sub, sub, |a, b| a.zip(b, |x, y| x - y));
jet_binop!(Mul, mul, |a, b| a.mul_jet(b));
jet_binop!(Div, div, |a, b| match b.recip() {
    Ok(r) => a.mul_jet(&r),
    Err(_) => a.scale(f64::NAN),
});

impl Add<f64> for &Jet {
    type Output = Jet;
    fn add(self, s: f64) -> Jet {
        let mut r = self.clone();
        r.c[0] += s;
        r
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, s: f64) -> Jet {
        self.c[0] += s;
        self
    }
}

impl Sub<f64> for &Jet {
    type Output = Jet;
    fn sub(self, s: f64) -> Jet {
        self + (-s)
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(self, s: f64) -> Jet {
        self + (-s)
    }
}

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        self.scale(s)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        self.scale(s)
    }
}

impl Mul<&Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: &Jet) -> Jet {
        j.scale(self)
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: Jet) -> Jet {
        j.scale(self)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, o: &Jet) {
        self.check(o);
        if o.order < self.order {
            *self = self.truncate(o.order);
        }
        for k in 0..self.c.len() {
            self.c[k] += o.c[k];
        }
    }
}

impl AddAssign<Jet> for Jet {
    fn add_assign(&mut self, o: Jet) {
        *self += &o;
    }
}

impl SubAssign<&Jet> for Jet {
    fn sub_assign(&mut self, o: &Jet) {
        self.check(o);
        if o.order < self.order {
            *self = self.truncate(o.order);
        }
        for k in 0..self.c.len() {
            self.c[k] -= o.c[k];
        }
    }
}

impl SubAssign<Jet> for Jet {
    fn sub_assign(&mut self, o: Jet) {
        *self -= &o;
    }
}

impl MulAssign<f64> for Jet {
    fn mul_assign(&mut self, s: f64) {
        for x in &mut self.c {
            *x *= s;
        }
    }
}

/// Sum of `a[k]·b[k]` over paired jets; `None` for empty input.
pub fn dot(a: &[Jet], b: &[Jet]) -> Option<Jet> {
    let mut it = a.iter().zip(b);
    let (x, y) = it.next()?;
    let mut acc = x * y;
    for (x, y) in it {
        acc += x * y;
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_sizes_match_binomials() {
        let t = Table::get(8);
        assert_eq!(t.len(5), 1287);
        assert_eq!(t.len(3), 165);
        let t = Table::get(4);
        assert_eq!(t.len(5), 126);
    }

    #[test]
    fn constant_has_zero_partials() {
        let j = Jet::constant(3, 2, 7.0);
        for (idx, v) in j.partials() {
            if idx.is_empty() {
                assert_eq!(v, 7.0);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn bilinear_monomial() {
        let u = Jet::variables(&[0.3, -1.2], 2);
        let f = &u[0] * &u[1];
        assert_eq!(f.derivative(&[0, 1]), 1.0);
        assert_eq!(f.derivative(&[0, 0]), 0.0);
        assert!((f.value() + 0.36).abs() < 1e-15);
    }

    #[test]
    fn exp_log_roundtrip() {
        let u = Jet::variables(&[0.4, 0.9, -0.2], 5);
        let g = &(&u[0] * &u[1]) + &u[2].sin();
        let back = g.exp().ln().unwrap();
        for (a, b) in back.coeffs().iter().zip(g.coeffs()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn fifth_derivative_of_power() {
        let u = Jet::variables(&[1.5], 5);
        let f = u[0].powi(7).unwrap();
        // d^5 x^7 = 7·6·5·4·3 x^2
        let want = 2520.0 * 1.5f64.powi(2);
        assert!((f.derivative(&[0, 0, 0, 0, 0]) - want).abs() < 1e-9);
    }

    #[test]
    fn partial_lowers_order() {
        let u = Jet::variables(&[0.5, 2.0], 3);
        let f = &u[0] * &u[0] * &u[1];
        let d = f.partial(0);
        assert_eq!(d.order(), 2);
        assert!((d.value() - 2.0 * 0.5 * 2.0).abs() < 1e-15);
        assert!((d.derivative(&[1]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn abs_at_zero_fails_above_order_zero() {
        let u = Jet::variables(&[0.0], 1);
        assert!(u[0].abs().is_err());
        let u = Jet::variables(&[0.0], 0);
        assert!(u[0].abs().is_ok());
    }
}
