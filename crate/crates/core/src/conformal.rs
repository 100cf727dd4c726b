//! Conformal rescaling with fixed N, the Weyl d-tensor, the P d-tensor and
//! Bianchi-type residuals.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::connections::{connection_at, riemann_block, Connection, ConnectionKind, CurvaturePackage};
use crate::error::{Error, Result};
use crate::field::{eval_jet, ScalarField};
use crate::geometry::{ChartSpec, DMetricJets, DMetricSource};
use crate::jets::Jet;
use crate::tensor::{Role, TensorBlock, Variance};

/// Positivity floor for the conformal factor.
pub const FACTOR_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct ConformalFactor {
    pub w: ScalarField,
}

impl ConformalFactor {
    pub fn new(w: ScalarField) -> ConformalFactor {
        ConformalFactor { w }
    }

    pub fn jet(&self, point: &[f64], order: usize) -> Result<Jet> {
        let j = eval_jet(&self.w, point, order)?;
        if !(j.value() > FACTOR_EPS) {
            return Err(Error::NonpositiveFactor(j.value()));
        }
        Ok(j)
    }
}

/// `ĝ = ϖ² g`, `ĥ = ϖ² h` with the same N.
#[derive(Clone)]
pub struct Rescaled {
    pub inner: Arc<dyn DMetricSource>,
    pub factor: ConformalFactor,
}

impl DMetricSource for Rescaled {
    fn chart(&self) -> &ChartSpec {
        self.inner.chart()
    }

    fn jets(&self, point: &[f64], order: usize) -> Result<DMetricJets> {
        self.jets_split(point, order, order)
    }

    fn jets_split(&self, point: &[f64], metric_order: usize, nconn_order: usize) -> Result<DMetricJets> {
        let mut j = self.inner.jets_split(point, metric_order, nconn_order)?;
        let w = self.factor.jet(point, j.metric_order())?;
        let w2 = &w * &w;
        for x in j.g.iter_mut().chain(j.h.iter_mut()) {
            *x = &*x * &w2;
        }
        Ok(j)
    }

    fn max_order(&self) -> usize {
        self.inner.max_order()
    }
}

/// The rescaled d-metric and `Υ_α = e_α ln ϖ` at `point`.
pub fn conformal_rescale(src: Arc<dyn DMetricSource>, factor: &ConformalFactor, point: &[f64]) -> Result<(Rescaled, TensorBlock)> {
    let j = src.jets(point, 1)?;
    let (n, m) = (j.n, j.m);
    let lw = factor.jet(point, 1)?.ln()?;
    let ups: Vec<f64> = (0..n + m).map(|a| crate::geometry::elongated(n, m, &j.nc, a, &lw).value()).collect();
    let ups = TensorBlock::from_data(&[n + m], &[Variance::Down], &[Role::Total], ups);
    Ok((
        Rescaled {
            inner: src,
            factor: factor.clone(),
        },
        ups,
    ))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeylPackage {
    /// `C^τ_{αβγ}`, same layout as the curvature.
    pub weyl_mixed: TensorBlock,
    /// `C_{ταβγ} = g_{τμ} C^μ_{αβγ}`.
    pub weyl_lowered: TensorBlock,
    pub p: TensorBlock,
}

/// Lowers the first index: `L_{abcd} = g_{aμ} R^μ_{bcd}`.
pub fn lower_first(r: &TensorBlock, g: &DMatrix<f64>) -> TensorBlock {
    let d = g.nrows();
    let mut out = TensorBlock::total(d, &[Variance::Down; 4]);
    for idx in out.indices() {
        let s = (0..d).map(|mu| g[(idx[0], mu)] * r.get(&[mu, idx[1], idx[2], idx[3]])).sum();
        out.set(&idx, s);
    }
    out
}

pub fn raise_first(c: &TensorBlock, ginv: &DMatrix<f64>) -> TensorBlock {
    let d = ginv.nrows();
    let mut out = TensorBlock::total(d, &[Variance::Up, Variance::Down, Variance::Down, Variance::Down]);
    for idx in out.indices() {
        let s = (0..d).map(|mu| ginv[(idx[0], mu)] * c.get(&[mu, idx[1], idx[2], idx[3]])).sum();
        out.set(&idx, s);
    }
    out
}

/// Weyl and P d-tensors from a curvature package in four dimensions:
/// `C_{abcd} = L_{abcd} + ½(R_{ac}g_{bd} − R_{ad}g_{bc} − R_{bc}g_{ad} + R_{bd}g_{ac})
///  − (sR/6)(g_{ac}g_{bd} − g_{ad}g_{bc})`, `2P = (sR/6) g − Ric`.
pub fn weyl_dtensor(pkg: &CurvaturePackage, g: &DMatrix<f64>) -> Result<WeylPackage> {
    let d = g.nrows();
    let ginv = g
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularMetric("metric not invertible".into()))?;
    let l = lower_first(&pkg.riemann, g);
    let ric = |a: usize, b: usize| pkg.ricci.get(&[a, b]);
    let s6 = pkg.scalar / 6.0;
    let mut c = TensorBlock::total(d, &[Variance::Down; 4]);
    for idx in c.indices() {
        let (a, b, cc, dd) = (idx[0], idx[1], idx[2], idx[3]);
        let v = l.get(&idx) + 0.5 * (ric(a, cc) * g[(b, dd)] - ric(a, dd) * g[(b, cc)] - ric(b, cc) * g[(a, dd)] + ric(b, dd) * g[(a, cc)])
            - s6 * (g[(a, cc)] * g[(b, dd)] - g[(a, dd)] * g[(b, cc)]);
        c.set(&idx, v);
    }
    let mut p = TensorBlock::total(d, &[Variance::Down; 2]);
    for a in 0..d {
        for b in 0..d {
            p.set(&[a, b], 0.5 * (s6 * g[(a, b)] - ric(a, b)));
        }
    }
    Ok(WeylPackage {
        weyl_mixed: raise_first(&c, &ginv),
        weyl_lowered: c,
        p,
    })
}

/// Largest trace of the lowered Weyl tensor over the pairs `(0,3)` and
/// `(1,2)` (the others follow by antisymmetry).
pub fn weyl_trace(c: &TensorBlock, ginv: &DMatrix<f64>) -> f64 {
    let d = ginv.nrows();
    let mut worst: f64 = 0.0;
    for x in 0..d {
        for y in 0..d {
            let mut t1 = 0.0;
            let mut t2 = 0.0;
            for a in 0..d {
                for b in 0..d {
                    t1 += ginv[(a, b)] * c.get(&[a, x, y, b]);
                    t2 += ginv[(a, b)] * c.get(&[x, a, b, y]);
                }
            }
            worst = worst.max(t1.abs()).max(t2.abs());
        }
    }
    worst
}

/// Weyl package of a connection at its base point.
pub fn weyl_of(conn: &Connection) -> Result<WeylPackage> {
    weyl_dtensor(&conn.package()?, &conn.geo.metric_values())
}

/// `(‖Ĉ_lowered − ϖ²C_lowered‖∞, ‖Ĉ^τ − C^τ‖∞)` with the same N on both sides.
pub fn conformal_invariance_check(src: Arc<dyn DMetricSource>, factor: &ConformalFactor, kind: ConnectionKind, point: &[f64]) -> Result<(f64, f64)> {
    let w = factor.jet(point, 0)?.value();
    let c = weyl_of(&connection_at(src.as_ref(), kind, point, 1)?)?;
    let r = Rescaled {
        inner: src,
        factor: factor.clone(),
    };
    let ch = weyl_of(&connection_at(&r, kind, point, 1)?)?;
    let mut lowered: f64 = 0.0;
    for (a, b) in ch.weyl_lowered.data.iter().zip(&c.weyl_lowered.data) {
        lowered = lowered.max((a - w * w * b).abs());
    }
    Ok((lowered, ch.weyl_mixed.max_diff(&c.weyl_mixed)))
}

fn at4(d: usize, t: usize, a: usize, b: usize, c: usize) -> usize {
    ((t * d + a) * d + b) * d + c
}

/// Covariant derivative of the curvature, `[ε][τ][α][β][γ] = (D_ε R)^τ_{αβγ}`,
/// at the base point. Needs connection order ≥ 2.
pub fn curvature_derivative(conn: &Connection) -> Result<Vec<f64>> {
    let d = conn.dim();
    let r = conn.curvature()?;
    if r[0].order() == 0 {
        return Err(Error::OrderUnsupported {
            requested: 2,
            max: conn.order(),
        });
    }
    let g = |c: usize, a: usize, b: usize| conn.gamma(c, a, b).value();
    let rv: Vec<f64> = r.iter().map(Jet::value).collect();
    let mut out = Vec::with_capacity(d.pow(5));
    for e in 0..d {
        for t in 0..d {
            for a in 0..d {
                for b in 0..d {
                    for c in 0..d {
                        let mut s = conn.geo.e(e, &r[at4(d, t, a, b, c)]).value();
                        for mu in 0..d {
                            s += g(t, mu, e) * rv[at4(d, mu, a, b, c)];
                            s -= g(mu, a, e) * rv[at4(d, t, mu, b, c)];
                            s -= g(mu, b, e) * rv[at4(d, t, a, mu, c)];
                            s -= g(mu, c, e) * rv[at4(d, t, a, b, mu)];
                        }
                        out.push(s);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Covariant derivative of a rank-2 covariant tensor given as jets
/// (`[a][b]`), returned as values `[e][a][b] = D_e T_{ab}`.
pub fn covariant_rank2(conn: &Connection, t: &[Jet]) -> Vec<f64> {
    let d = conn.dim();
    let mut out = Vec::with_capacity(d * d * d);
    for e in 0..d {
        for a in 0..d {
            for b in 0..d {
                let mut s = conn.geo.e(e, &t[a * d + b]).value();
                for mu in 0..d {
                    s -= conn.gamma(mu, a, e).value() * t[mu * d + b].value();
                    s -= conn.gamma(mu, b, e).value() * t[a * d + mu].value();
                }
                out.push(s);
            }
        }
    }
    out
}

/// Ricci and scalar curvature as jets, one order below the curvature jets.
pub fn ricci_jets(conn: &Connection, r: &[Jet]) -> (Vec<Jet>, Jet) {
    let d = conn.dim();
    let mut ric = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            let mut s = r[at4(d, 0, a, b, 0)].clone();
            for t in 1..d {
                s += &r[at4(d, t, a, b, t)];
            }
            ric.push(s);
        }
    }
    let mut sr = conn.geo.ginv(0, 0) * &ric[0];
    for k in 1..d * d {
        sr += conn.geo.ginv(k / d, k % d) * &ric[k];
    }
    (ric, sr)
}

/// `P_{ab} = ½((sR/6) g_{ab} − R_{ab})` as jets, from Ricci and scalar jets.
pub fn p_jets(conn: &Connection, ric: &[Jet], sr: &Jet) -> Vec<Jet> {
    let d = conn.dim();
    let s6 = sr * (1.0 / 6.0);
    let mut p = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            p.push(&(&(&s6 * conn.geo.g(a, b)) - &ric[a * d + b]) * 0.5);
        }
    }
    p
}

/// Residuals of the two Bianchi-type identities:
/// * the cyclic sum `D_ε R^τ_{αβγ} + D_β R^τ_{αγε} + D_γ R^τ_{αεβ}`;
/// * `g^{τε} D_ε C_{γταβ} + D_α P_{βγ} − D_β P_{αγ}`, i.e. the divergence
///   of the Weyl tensor against `−2 D_{[α} P_{β]γ}` with the antisymmetric
///   pair of the Weyl tensor matched to the bracket.
///
/// Both are exact for a torsion-free metric connection; for torsionful
/// connections the values are a measurement. Needs connection order ≥ 2.
pub fn bianchi_residual(conn: &Connection) -> Result<(f64, f64)> {
    let d = conn.dim();
    let dr = curvature_derivative(conn)?;
    let at5 = |e: usize, t: usize, a: usize, b: usize, c: usize| (((e * d + t) * d + a) * d + b) * d + c;
    let mut first: f64 = 0.0;
    for t in 0..d {
        for a in 0..d {
            for e in 0..d {
                for b in 0..d {
                    for c in 0..d {
                        let s = dr[at5(e, t, a, b, c)] + dr[at5(b, t, a, c, e)] + dr[at5(c, t, a, e, b)];
                        first = first.max(s.abs());
                    }
                }
            }
        }
    }
    // Weyl and P as jets (order ≥ 1) so that their derivatives are available.
    let r = conn.curvature()?;
    let (ric, sr) = ricci_jets(conn, &r);
    let mut l = Vec::with_capacity(d.pow(4));
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for dd in 0..d {
                    let mut s = conn.geo.g(a, 0) * &r[at4(d, 0, b, c, dd)];
                    for mu in 1..d {
                        s += conn.geo.g(a, mu) * &r[at4(d, mu, b, c, dd)];
                    }
                    l.push(s);
                }
            }
        }
    }
    let g = |a: usize, b: usize| conn.geo.g(a, b);
    let s6 = &sr * (1.0 / 6.0);
    let mut weyl = Vec::with_capacity(d.pow(4));
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for dd in 0..d {
                    let mut v = l[at4(d, a, b, c, dd)].clone();
                    let half = &(&(&ric[a * d + c] * g(b, dd)) - &(&ric[a * d + dd] * g(b, c)))
                        + &(&(&ric[b * d + dd] * g(a, c)) - &(&ric[b * d + c] * g(a, dd)));
                    v += &(half * 0.5);
                    let gg = &(g(a, c) * g(b, dd)) - &(g(a, dd) * g(b, c));
                    v -= &(&s6 * &gg);
                    weyl.push(v);
                }
            }
        }
    }
    let dp = covariant_rank2(conn, &p_jets(conn, &ric, &sr));
    let gv = |c: usize, a: usize, b: usize| conn.gamma(c, a, b).value();
    let wv: Vec<f64> = weyl.iter().map(Jet::value).collect();
    let ginv = conn.geo.inverse_values();
    let mut second: f64 = 0.0;
    for gm in 0..d {
        for a in 0..d {
            for b in 0..d {
                let mut div = 0.0;
                for t in 0..d {
                    for e in 0..d {
                        let gi = ginv[(t, e)];
                        if gi == 0.0 {
                            continue;
                        }
                        // (D_e C)_{gm t a b}
                        let mut s = conn.geo.e(e, &weyl[at4(d, gm, t, a, b)]).value();
                        for mu in 0..d {
                            s -= gv(mu, gm, e) * wv[at4(d, mu, t, a, b)];
                            s -= gv(mu, t, e) * wv[at4(d, gm, mu, a, b)];
                            s -= gv(mu, a, e) * wv[at4(d, gm, t, mu, b)];
                            s -= gv(mu, b, e) * wv[at4(d, gm, t, a, mu)];
                        }
                        div += gi * s;
                    }
                }
                let rhs = dp[(a * d + b) * d + gm] - dp[(b * d + a) * d + gm];
                second = second.max((div + rhs).abs());
            }
        }
    }
    Ok((first, second))
}

/// `□f = g^{αβ}(e_α e_β f − Γ^μ_{βα} e_μ f)` for a scalar jet of order ≥ 2.
pub fn box_operator(conn: &Connection, f: &Jet) -> f64 {
    let d = conn.dim();
    let ef: Vec<Jet> = (0..d).map(|a| conn.geo.e(a, f)).collect();
    let ginv = conn.geo.inverse_values();
    let mut s = 0.0;
    for a in 0..d {
        for b in 0..d {
            if ginv[(a, b)] == 0.0 {
                continue;
            }
            let mut h = conn.geo.e(a, &ef[b]).value();
            for mu in 0..d {
                h -= conn.gamma(mu, b, a).value() * ef[mu].value();
            }
            s += ginv[(a, b)] * h;
        }
    }
    s
}

/// Scalar-curvature relation under rescaling, returned as
/// `(4ϖ²Λ̂ − 4Λ, ϖ⁻¹□ϖ)` so the caller can compare either sign.
pub fn lambda_relation(src: Arc<dyn DMetricSource>, factor: &ConformalFactor, kind: ConnectionKind, point: &[f64]) -> Result<(f64, f64)> {
    let conn = connection_at(src.as_ref(), kind, point, 1)?;
    let lam = conn.package()?.lambda_spinor;
    let w = factor.jet(point, 2)?;
    let bw = box_operator(&conn, &w);
    let r = Rescaled {
        inner: src,
        factor: factor.clone(),
    };
    let lam_h = connection_at(&r, kind, point, 1)?.package()?.lambda_spinor;
    Ok((4.0 * w.value() * w.value() * lam_h - 4.0 * lam, bw / w.value()))
}

/// Curvature block of a connection at its base point (convenience for
/// callers that only need `R`).
pub fn riemann_at(conn: &Connection) -> Result<TensorBlock> {
    Ok(riemann_block(&conn.curvature()?, conn.dim()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DMetricField, NConnectionField};

    fn sf(s: &str) -> ScalarField {
        ScalarField::parse(4, s).unwrap()
    }

    fn flat() -> DMetricField {
        DMetricField::diagonal(
            ChartSpec::new(2, 2, vec![1, 1, 1, -1]).unwrap(),
            vec![sf("1"), sf("1")],
            vec![sf("1"), sf("-1")],
            NConnectionField::zero(2, 2),
        )
        .unwrap()
    }

    #[test]
    fn unit_and_constant_factors() {
        let src: Arc<dyn DMetricSource> = Arc::new(flat());
        let p = [0.1, 0.2, 0.3, 0.4];
        let (r, ups) = conformal_rescale(src.clone(), &ConformalFactor::new(sf("2")), &p).unwrap();
        assert_eq!(ups.max_abs(), 0.0);
        let j = r.jets(&p, 0).unwrap();
        assert_eq!(j.g_values()[(0, 0)], 4.0);
        let (_, ups) = conformal_rescale(src, &ConformalFactor::new(sf("exp(u1)")), &p).unwrap();
        assert!((ups.get(&[0]) - 1.0).abs() < 1e-14);
        assert!(ups.get(&[1]).abs() < 1e-14);
    }

    #[test]
    fn nonpositive_factor() {
        let f = ConformalFactor::new(sf("u1"));
        assert!(matches!(f.jet(&[-0.5, 0.0, 0.0, 0.0], 0), Err(Error::NonpositiveFactor(_))));
    }

    #[test]
    fn flat_weyl_vanishes() {
        let c = connection_at(&flat(), ConnectionKind::Canonical, &[0.1, 0.2, 0.3, 0.4], 1).unwrap();
        let w = weyl_of(&c).unwrap();
        assert_eq!(w.weyl_lowered.max_abs(), 0.0);
        assert_eq!(w.p.max_abs(), 0.0);
    }
}
