//! Scalar fields on a chart and their jet / finite-difference evaluation.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::jets::{Jet, MAX_ORDER};

type JetFn = dyn Fn(&[Jet]) -> Result<Jet> + Send + Sync;
type ValueFn = dyn Fn(&[f64]) -> Result<f64> + Send + Sync;

/// A smooth function of `arity` coordinates.
///
/// The jet path and the plain `f64` path are kept separate so that the
/// finite-difference oracle never touches jet arithmetic.
#[derive(Clone)]
pub struct ScalarField {
    arity: usize,
    label: String,
    jet: Arc<JetFn>,
    value: Arc<ValueFn>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField({}, arity {})", self.label, self.arity)
    }
}

impl ScalarField {
    pub fn new(
        arity: usize,
        label: impl Into<String>,
        jet: impl Fn(&[Jet]) -> Result<Jet> + Send + Sync + 'static,
        value: impl Fn(&[f64]) -> Result<f64> + Send + Sync + 'static,
    ) -> ScalarField {
        ScalarField {
            arity,
            label: label.into(),
            jet: Arc::new(jet),
            value: Arc::new(value),
        }
    }

    /// Field given only by its jet rule; plain evaluation uses order-0 jets.
    pub fn from_jet_fn(arity: usize, label: impl Into<String>, jet: impl Fn(&[Jet]) -> Result<Jet> + Send + Sync + 'static) -> ScalarField {
        let jet: Arc<JetFn> = Arc::new(jet);
        let j2 = jet.clone();
        ScalarField {
            arity,
            label: label.into(),
            jet,
            value: Arc::new(move |u: &[f64]| Ok(j2(&Jet::variables(u, 0))?.value())),
        }
    }

    pub fn from_expr(arity: usize, label: impl Into<String>, e: Expr) -> Result<ScalarField> {
        if let Some(v) = e.max_var() {
            if v >= arity {
                return Err(Error::Validation(format!("expression uses u{} on a chart of dimension {arity}", v + 1)));
            }
        }
        let e = Arc::new(e);
        let e2 = e.clone();
        Ok(ScalarField::new(arity, label, move |u| e.eval_jet(u), move |u| e2.eval(u)))
    }

    /// Parses an expression in the field language.
    pub fn parse(arity: usize, src: &str) -> Result<ScalarField> {
        ScalarField::from_expr(arity, src, expr::parse(src)?)
    }

    pub fn constant(arity: usize, c: f64) -> ScalarField {
        ScalarField::new(arity, format!("{c}"), move |u| Ok(u[0].constant_like(c)), move |_| Ok(c))
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        self.check_arity(point.len())?;
        (self.value)(point)
    }

    /// Evaluates on caller-built coordinate jets (e.g. shifted or composed).
    pub fn eval_on(&self, u: &[Jet]) -> Result<Jet> {
        self.check_arity(u.len())?;
        let j = (self.jet)(u)?;
        if !j.is_finite() {
            return Err(Error::EvaluationFailure(format!("{} is not finite here", self.label)));
        }
        Ok(j)
    }

    fn check_arity(&self, got: usize) -> Result<()> {
        if got != self.arity {
            return Err(Error::ArityMismatch { expected: self.arity, got });
        }
        Ok(())
    }
}

/// All partial derivatives of `f` at `point` up to `order`.
pub fn eval_jet(f: &ScalarField, point: &[f64], order: usize) -> Result<Jet> {
    if order > MAX_ORDER {
        return Err(Error::OrderUnsupported {
            requested: order,
            max: MAX_ORDER,
        });
    }
    f.eval_on(&Jet::variables(point, order))
}

/// Base step of the finite-difference oracle for first derivatives.
pub const FD_STEP: f64 = 1e-3;

/// Step used for a partial of total degree `k`: `FD_STEP^(2/(k+1))`, which is
/// `FD_STEP` for first derivatives and widens for higher ones so that
/// round-off (∝ h^-k) stays below the extrapolated truncation error.
pub fn fd_step(k: usize) -> f64 {
    FD_STEP.powf(2.0 / (k as f64 + 1.0))
}

/// Central-difference estimate of `∂^α f`, α given as a list of variables,
/// with two levels of Richardson extrapolation over steps 4h, 2h, h.
pub fn fd_partial(f: &ScalarField, point: &[f64], vars: &[usize]) -> Result<f64> {
    if vars.is_empty() {
        return f.eval(point);
    }
    let h = fd_step(vars.len());
    let d = |step: f64| central(f, point, vars, step);
    let (d1, d2, d4) = (d(h)?, d(2.0 * h)?, d(4.0 * h)?);
    let r1 = (4.0 * d1 - d2) / 3.0;
    let r2 = (4.0 * d2 - d4) / 3.0;
    Ok((16.0 * r1 - r2) / 15.0)
}

fn central(f: &ScalarField, point: &[f64], vars: &[usize], h: f64) -> Result<f64> {
    let mut mult = vec![0usize; point.len()];
    for &v in vars {
        mult[v] += 1;
    }
    let axes: Vec<(usize, usize)> = mult.iter().copied().enumerate().filter(|&(_, k)| k > 0).collect();
    // Each axis with multiplicity k uses the stencil δ^k: shifts (k/2 − j)h,
    // weights (−1)^j C(k, j).
    let mut total = 0.0;
    let mut counters = vec![0usize; axes.len()];
    let mut p = point.to_vec();
    loop {
        let mut w = 1.0;
        for (a, &(var, k)) in axes.iter().enumerate() {
            let j = counters[a];
            w *= binom(k, j) * if j.is_multiple_of(2) { 1.0 } else { -1.0 };
            p[var] = point[var] + (k as f64 / 2.0 - j as f64) * h;
        }
        total += w * f.eval(&p)?;
        let mut a = 0;
        loop {
            if a == axes.len() {
                return Ok(total / h.powi(vars.len() as i32));
            }
            counters[a] += 1;
            if counters[a] <= axes[a].1 {
                break;
            }
            counters[a] = 0;
            a += 1;
        }
    }
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Max over multi-indices up to `order` of `|jet − fd| / (1 + |jet|)`.
pub fn jet_crosscheck(f: &ScalarField, point: &[f64], order: usize) -> Result<f64> {
    let jet = eval_jet(f, point, order)?;
    let mut worst: f64 = 0.0;
    for (idx, v) in jet.partials() {
        let fd = fd_partial(f, point, &idx)?;
        let r = (v - fd).abs() / (1.0 + v.abs());
        if !r.is_finite() {
            return Ok(f64::INFINITY);
        }
        worst = worst.max(r);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_cap() {
        let f = ScalarField::parse(2, "u1*u2").unwrap();
        assert!(matches!(eval_jet(&f, &[0.0, 0.0], 6), Err(Error::OrderUnsupported { .. })));
    }

    #[test]
    fn analytic_field_crosscheck() {
        let f = ScalarField::parse(2, "exp(u1)*sin(u2)").unwrap();
        let r = jet_crosscheck(&f, &[0.3, 0.8], 2).unwrap();
        assert!(r < 1e-6, "residual {r}");
    }

    #[test]
    fn constant_crosscheck_is_exact() {
        let f = ScalarField::constant(3, 2.5);
        assert!(jet_crosscheck(&f, &[0.1, 0.2, 0.3], 3).unwrap() < 1e-14);
    }

    #[test]
    fn kink_is_rejected() {
        let f = ScalarField::parse(1, "abs(u1)").unwrap();
        assert!(matches!(jet_crosscheck(&f, &[0.0], 1), Err(Error::EvaluationFailure(_))));
    }

    #[test]
    fn arity_checked() {
        let f = ScalarField::parse(2, "u1").unwrap();
        assert!(f.eval(&[1.0]).is_err());
        assert!(ScalarField::parse(2, "u3").is_err());
    }
}
