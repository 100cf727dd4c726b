//! Square matrices of jets stored row-major in flat vectors.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::jets::Jet;

/// Determinant threshold below which a block counts as degenerate.
pub const DET_EPS: f64 = 1e-12;

pub fn values(a: &[Jet], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| a[i * n + j].value())
}

pub fn min_order(a: &[Jet]) -> usize {
    a.iter().map(Jet::order).min().unwrap_or(0)
}

pub fn truncate(a: &[Jet], order: usize) -> Vec<Jet> {
    a.iter().map(|j| j.truncate(order)).collect()
}

/// Jet-valued inverse, accurate to the lowest order present in `a`.
///
/// With `A = A₀ + Δ` (Δ has no constant term), iterates
/// `X ← A₀⁻¹ − A₀⁻¹ Δ X`, gaining one order per sweep.
pub fn inverse(a: &[Jet], n: usize) -> Result<Vec<Jet>> {
    let a0 = values(a, n);
    let det = a0.determinant();
    if !(det.abs() > DET_EPS) {
        return Err(Error::SingularMetric(format!("|det| = {:e}", det.abs())));
    }
    let inv0 = a0.try_inverse().ok_or_else(|| Error::SingularMetric("inversion failed".into()))?;
    let order = min_order(a);
    let nv = a[0].nvars();
    let mut delta: Vec<Jet> = a.iter().map(|j| j.truncate(order)).collect();
    for d in &mut delta {
        *d = &*d - d.value();
    }
    // B = A₀⁻¹ Δ, built by scalar combinations only.
    let mut b = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = Jet::zero(nv, order);
            for k in 0..n {
                let s = inv0[(i, k)];
                if s != 0.0 {
                    acc += &delta[k * n + j] * s;
                }
            }
            b.push(acc);
        }
    }
    let consts: Vec<Jet> = (0..n * n).map(|k| Jet::constant(nv, order, inv0[(k / n, k % n)])).collect();
    let mut x = consts.clone();
    for _ in 0..order {
        let bx = matmul(&b, &x, n);
        x = consts.iter().zip(&bx).map(|(c, p)| c - p).collect();
    }
    Ok(x)
}

pub fn matmul(a: &[Jet], b: &[Jet], n: usize) -> Vec<Jet> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = &a[i * n] * &b[j];
            for k in 1..n {
                acc += &a[i * n + k] * &b[k * n + j];
            }
            out.push(acc);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_times_matrix_is_identity_to_full_order() {
        let u = Jet::variables(&[0.3, -0.4], 4);
        let a = vec![&u[0].exp() + 1.0, &u[0] * &u[1], &u[0] * &u[1], &u[1].cos() * 2.0];
        let inv = inverse(&a, 2).unwrap();
        let p = matmul(&a, &inv, 2);
        for (k, j) in p.iter().enumerate() {
            let want = if k % 3 == 0 { 1.0 } else { 0.0 };
            assert!((j.value() - want).abs() < 1e-14);
            assert!(j.coeffs()[1..].iter().all(|c| c.abs() < 1e-12));
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = vec![
            Jet::constant(1, 1, 1.0),
            Jet::constant(1, 1, 2.0),
            Jet::constant(1, 1, 2.0),
            Jet::constant(1, 1, 4.0),
        ];
        assert!(matches!(inverse(&a, 2), Err(Error::SingularMetric(_))));
    }
}
