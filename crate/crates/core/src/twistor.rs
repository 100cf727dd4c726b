//! Nonholonomic twistors on 4-dimensional Lorentzian blocks: the twistor
//! equation residual, flat-background solutions, spirality and kinematics,
//! local twistor transport along curves and the curvature of the transport.
//!
//! A twistor `Z = (ω^A, π_{A'})` is transported along a curve with tangent
//! `t` by `t·Dω^B = −i t^{BA'} π_{A'}`, `t·Dπ_{B'} = −i t^{AA'} P_{AA'BB'} ω^B`,
//! where `D` acts through the spin connection of the chosen d-connection.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::conformal::{covariant_rank2, p_jets, ricci_jets, weyl_of, ConformalFactor};
use crate::connections::{connection_at, Connection, ConnectionKind};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{DMetricSource, FramePair};
use crate::jets::Jet;
use crate::spin::{self, blockwise_of, curvature_spinors, lowered_curvature, spin_frame, Mat2, Soldering, SpinFrame, EPSILON};
use crate::tensor::{Block, Role, TensorBlock, Variance};

/// Largest `|Ψ|` for which a background counts as conformally flat.
pub const CERTIFY_TOL: f64 = 1e-8;

/// Sign relating the spinor form of the P d-tensor in the transport to the
/// soldered tensor, `P_{AA'BB'} = P_SIGN γ^α_{AA'} γ^β_{BB'} P_{αβ}`.
pub const P_SIGN: f64 = -1.0;

/// Normalization of the `Ψ` blocks of the curvature matrix.
pub const PSI_COUPLING: f64 = -1.0;

/// Normalization of the `DP` block of the curvature matrix.
pub const DP_COUPLING: f64 = 1.0;

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

fn eps(a: usize, b: usize) -> f64 {
    EPSILON[a][b]
}

/// A twistor `(ω^A, π_{A'})`, or with `dual` set a dual twistor
/// `(λ_A, μ^{A'})` stored in the same slots.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistorValue {
    pub omega: [C64; 2],
    pub pi: [C64; 2],
    pub dual: bool,
}

impl TwistorValue {
    pub fn new(omega: [C64; 2], pi: [C64; 2]) -> TwistorValue {
        TwistorValue { omega, pi, dual: false }
    }

    /// Dual twistor `(λ_A, μ^{A'})`.
    pub fn new_dual(lambda: [C64; 2], mu: [C64; 2]) -> TwistorValue {
        TwistorValue {
            omega: lambda,
            pi: mu,
            dual: true,
        }
    }

    pub fn to_array(&self) -> [C64; 4] {
        [self.omega[0], self.omega[1], self.pi[0], self.pi[1]]
    }

    pub fn from_array(z: [C64; 4], dual: bool) -> TwistorValue {
        TwistorValue {
            omega: [z[0], z[1]],
            pi: [z[2], z[3]],
            dual,
        }
    }

    /// Complex conjugate `Z̄ = (π̄_A, ω̄^{A'})`, a dual twistor.
    pub fn conjugate(&self) -> TwistorValue {
        TwistorValue {
            omega: [self.pi[0].conj(), self.pi[1].conj()],
            pi: [self.omega[0].conj(), self.omega[1].conj()],
            dual: !self.dual,
        }
    }

    /// `W_α Z^α = λ_A ω^A + μ^{A'} π_{A'}` for a dual `self` and a twistor `z`.
    pub fn contract(&self, z: &TwistorValue) -> C64 {
        self.omega[0] * z.omega[0] + self.omega[1] * z.omega[1] + self.pi[0] * z.pi[0] + self.pi[1] * z.pi[1]
    }

    /// `W̄_α Z^α`.
    pub fn pairing(w: &TwistorValue, z: &TwistorValue) -> C64 {
        w.conjugate().contract(z)
    }

    pub fn max_diff(&self, other: &TwistorValue) -> f64 {
        self.to_array().iter().zip(other.to_array()).fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    fn scaled_add(&self, a: C64, other: &TwistorValue, b: C64) -> TwistorValue {
        let (x, y) = (self.to_array(), other.to_array());
        TwistorValue::from_array(std::array::from_fn(|k| a * x[k] + b * y[k]), self.dual)
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: C64, other: &TwistorValue, b: C64) -> TwistorValue {
        self.scaled_add(a, other, b)
    }
}

/// A complex 2-spinor field `ω^A(u)` given by real and imaginary scalar
/// fields.
#[derive(Clone, Debug)]
pub struct SpinorField {
    pub re: [ScalarField; 2],
    pub im: [ScalarField; 2],
}

impl SpinorField {
    pub fn constant(arity: usize, w: [C64; 2]) -> SpinorField {
        SpinorField {
            re: [ScalarField::constant(arity, w[0].re), ScalarField::constant(arity, w[1].re)],
            im: [ScalarField::constant(arity, w[0].im), ScalarField::constant(arity, w[1].im)],
        }
    }

    /// `(re, im)` jets of both components.
    pub fn jets(&self, point: &[f64], order: usize) -> Result<[(Jet, Jet); 2]> {
        let c = |k: usize| -> Result<(Jet, Jet)> {
            Ok((
                crate::field::eval_jet(&self.re[k], point, order)?,
                crate::field::eval_jet(&self.im[k], point, order)?,
            ))
        };
        Ok([c(0)?, c(1)?])
    }

    pub fn value(&self, point: &[f64]) -> Result<[C64; 2]> {
        Ok([
            C64::new(self.re[0].eval(point)?, self.im[0].eval(point)?),
            C64::new(self.re[1].eval(point)?, self.im[1].eval(point)?),
        ])
    }
}

/// `D_{BB'} ω^C` at the base point of `frame`, indexed `[B][B'][C]`.
pub fn spinor_derivative(field: &SpinorField, conn: &Connection, frame: &SpinFrame, point: &[f64]) -> Result<[[[C64; 2]; 2]; 2]> {
    let w = field.jets(point, 1)?;
    let wv = [C64::new(w[0].0.value(), w[0].1.value()), C64::new(w[1].0.value(), w[1].1.value())];
    let mut out = [[[ZERO; 2]; 2]; 2];
    for (k, &al) in frame.solder.indices.iter().enumerate() {
        let mut dw = [ZERO; 2];
        for cc in 0..2 {
            dw[cc] = C64::new(conn.geo.e(al, &w[cc].0).value(), conn.geo.e(al, &w[cc].1).value());
            for d in 0..2 {
                dw[cc] += frame.gamma[al][cc][d] * wv[d];
            }
        }
        let sd = frame.solder.sigma_dual[k];
        for b in 0..2 {
            for bp in 0..2 {
                for cc in 0..2 {
                    out[b][bp][cc] += sd[b][bp] * dw[cc];
                }
            }
        }
    }
    Ok(out)
}

fn twistor_residual_of(d: &[[[C64; 2]; 2]; 2], block: Block) -> TensorBlock<C64> {
    // R^{AB}_{A'} = ½(ε^{AC} D_{CA'} ω^B + ε^{BC} D_{CA'} ω^A)
    let mut out = TensorBlock::zeros(
        &[2, 2, 2],
        &[Variance::Up, Variance::Up, Variance::Down],
        &[Role::Unprimed(block), Role::Unprimed(block), Role::Primed(block)],
    );
    for a in 0..2 {
        for b in 0..2 {
            for ap in 0..2 {
                let mut s = ZERO;
                for cc in 0..2 {
                    s += d[cc][ap][b] * eps(a, cc) + d[cc][ap][a] * eps(b, cc);
                }
                out.set(&[a, b, ap], s * 0.5);
            }
        }
    }
    out
}

/// Symmetrized spinor derivative `D^{(A}_{A'} ω^{B)}` of a spinor field on
/// the given block, indexed `[A][B][A']`.
pub fn twistor_residual(field: &SpinorField, src: &dyn DMetricSource, kind: ConnectionKind, block: Block, point: &[f64]) -> Result<TensorBlock<C64>> {
    let conn = connection_at(src, kind, point, 0)?;
    let frame = block_frame(&conn, block)?;
    let d = spinor_derivative(field, &conn, &frame, point)?;
    Ok(twistor_residual_of(&d, block))
}

fn block_frame(conn: &Connection, block: Block) -> Result<SpinFrame> {
    let need = match block {
        Block::Total => conn.dim(),
        Block::H => conn.geo.n,
        Block::V => conn.geo.m,
    };
    if need != 4 {
        return Err(Error::WrongDimension(format!("twistors need a 4-dimensional block, got {need}")));
    }
    spin_frame(conn, block)
}

/// `Ψ_{ABCD}` of one block at a point, with that block's soldering.
fn block_psi(conn: &Connection, block: Block) -> Result<(TensorBlock<C64>, Soldering)> {
    match block {
        Block::Total => {
            let s = block_frame(conn, Block::Total)?.solder;
            let (cs, _) = curvature_spinors(&lowered_curvature(conn)?, &s)?;
            Ok((cs.psi, s))
        }
        Block::H => {
            let b = blockwise_of(conn)?;
            Ok((b.h.psi, b.h_solder))
        }
        Block::V => {
            let b = blockwise_of(conn)?;
            Ok((b.v.psi, b.v_solder))
        }
    }
}

/// Flat chart attached to an origin: the coframe at the origin turns
/// coordinate displacements into block components `x^α`, soldered with the
/// origin's soldering into `x^{AA'}`.
#[derive(Clone)]
pub struct FlatChart {
    pub src: Arc<dyn DMetricSource>,
    pub kind: ConnectionKind,
    pub block: Block,
    pub origin: Vec<f64>,
    pub coframe: DMatrix<f64>,
    pub solder: Soldering,
}

impl std::fmt::Debug for FlatChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlatChart")
            .field("block", &self.block)
            .field("origin", &self.origin)
            .finish()
    }
}

impl FlatChart {
    /// Certifies `max |Ψ| < CERTIFY_TOL` at the origin and builds the chart.
    pub fn new(src: Arc<dyn DMetricSource>, kind: ConnectionKind, block: Block, origin: &[f64]) -> Result<FlatChart> {
        let conn = connection_at(src.as_ref(), kind, origin, 1)?;
        let (psi, solder) = block_psi(&conn, block)?;
        let m = psi.max_abs();
        if m >= CERTIFY_TOL {
            return Err(Error::IncompatibleBackground(m));
        }
        let j = src.jets(origin, 0)?;
        let coframe = FramePair::from_n(&j.n_values(), origin).coframe;
        Ok(FlatChart {
            src,
            kind,
            block,
            origin: origin.to_vec(),
            coframe,
            solder,
        })
    }

    /// Re-checks `max |Ψ| < CERTIFY_TOL` at another point.
    pub fn certify(&self, point: &[f64]) -> Result<f64> {
        let conn = connection_at(self.src.as_ref(), self.kind, point, 1)?;
        let m = block_psi(&conn, self.block)?.0.max_abs();
        if m >= CERTIFY_TOL {
            return Err(Error::IncompatibleBackground(m));
        }
        Ok(m)
    }

    /// Coefficients `x^{AA'} = Σ_μ c^{AA'}_μ (u − u₀)^μ`.
    fn position_coeffs(&self) -> Vec<Mat2> {
        let dim = self.origin.len();
        (0..dim)
            .map(|mu| {
                let col: Vec<C64> = self.solder.indices.iter().map(|&al| C64::new(self.coframe[(al, mu)], 0.0)).collect();
                self.solder.vector_to_spinor(&col)
            })
            .collect()
    }

    /// `x^{AA'}` at a point.
    pub fn position(&self, point: &[f64]) -> Mat2 {
        let mut x = [[ZERO; 2]; 2];
        for (mu, c) in self.position_coeffs().iter().enumerate() {
            let du = point[mu] - self.origin[mu];
            for a in 0..2 {
                for ap in 0..2 {
                    x[a][ap] += c[a][ap] * du;
                }
            }
        }
        x
    }

    /// `ω^B(u) = ω̊^B − i x^{BB'} π̊_{B'}` as a field, for a twistor `z0`.
    pub fn omega_field(&self, z0: &TwistorValue) -> SpinorField {
        // ω^B = ω̊^B + Σ_μ k^B_μ (u − u₀)^μ, k^B_μ = −i c^{BB'}_μ π̊_{B'}
        let coeffs = self.position_coeffs();
        let arity = self.origin.len();
        let make = |b: usize, imag: bool| {
            let base = if imag { z0.omega[b].im } else { z0.omega[b].re };
            let slope: Vec<f64> = coeffs
                .iter()
                .map(|c| {
                    let k = -I * (c[b][0] * z0.pi[0] + c[b][1] * z0.pi[1]);
                    if imag {
                        k.im
                    } else {
                        k.re
                    }
                })
                .collect();
            let origin = self.origin.clone();
            ScalarField::from_jet_fn(arity, format!("omega{b}"), move |u: &[Jet]| {
                let mut acc = u[0].constant_like(base);
                for (mu, s) in slope.iter().enumerate() {
                    if *s != 0.0 {
                        acc += &(&u[mu] - origin[mu]) * *s;
                    }
                }
                Ok(acc)
            })
        };
        SpinorField {
            re: [make(0, false), make(1, false)],
            im: [make(0, true), make(1, true)],
        }
    }
}

/// Closed-form solution through `z0` on a certified flat chart:
/// `ω^B = ω̊^B − i x^{BB'} π̊_{B'}`, `π = π̊`; for a dual twistor
/// `λ = λ̊`, `μ^{A'} = μ̊^{A'} + i x^{AA'} λ̊_A`.
pub fn flat_twistor_solution(chart: &FlatChart, z0: &TwistorValue, point: &[f64]) -> Result<TwistorValue> {
    chart.certify(point)?;
    let x = chart.position(point);
    let mut z = *z0;
    if z0.dual {
        for ap in 0..2 {
            z.pi[ap] = z0.pi[ap] + I * (x[0][ap] * z0.omega[0] + x[1][ap] * z0.omega[1]);
        }
    } else {
        for b in 0..2 {
            z.omega[b] = z0.omega[b] - I * (x[b][0] * z0.pi[0] + x[b][1] * z0.pi[1]);
        }
    }
    Ok(z)
}

/// `Ψ_{TABC} ω^T` on a 4-dimensional chart, indexed `[A][B][C]`.
pub fn twistor_compatibility(src: &dyn DMetricSource, kind: ConnectionKind, omega: [C64; 2], point: &[f64]) -> Result<TensorBlock<C64>> {
    let conn = connection_at(src, kind, point, 1)?;
    let (psi, _) = block_psi(&conn, Block::Total)?;
    Ok(contract_first(&psi, omega, Block::Total))
}

fn contract_first(psi: &TensorBlock<C64>, omega: [C64; 2], block: Block) -> TensorBlock<C64> {
    let r = Role::Unprimed(block);
    let mut out = TensorBlock::zeros(&[2, 2, 2], &[Variance::Down; 3], &[r; 3]);
    for idx in out.indices() {
        let s = (0..2).map(|t| psi.get(&[t, idx[0], idx[1], idx[2]]) * omega[t]).sum();
        out.set(&idx, s);
    }
    out
}

/// Compatibility residuals of the blockwise twistor equations on a 4+4
/// scenario: `Ψ̃_{LIJK} ω_h^L`, the mixed `X̃_{(IJK)D} ω_v^D` and
/// `Ψ̃_{DABC} ω_v^D`, each as a max-norm.
pub fn finsler_twistor_compatibility(
    src: &dyn DMetricSource,
    kind: ConnectionKind,
    omega_h: [C64; 2],
    omega_v: [C64; 2],
    point: &[f64],
) -> Result<[f64; 3]> {
    let conn = connection_at(src, kind, point, 1)?;
    let b = blockwise_of(&conn)?;
    let h = contract_first(&b.h.psi, omega_h, Block::H).max_abs();
    let v = contract_first(&b.v.psi, omega_v, Block::V).max_abs();
    let mut mixed: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                let mut s = ZERO;
                for p in [[i, j, k], [i, k, j], [j, i, k], [j, k, i], [k, i, j], [k, j, i]] {
                    for d in 0..2 {
                        s += b.mixed.get(&[p[0], p[1], p[2], d]) * omega_v[d];
                    }
                }
                mixed = mixed.max((s / 6.0).norm());
            }
        }
    }
    Ok([h, mixed, v])
}

/// Spirality, momentum, angular momentum and spin of a twistor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Kinematics {
    pub s: f64,
    /// `p_α`.
    pub p: [f64; 4],
    /// `M^{αβ}`.
    pub m: [[f64; 4]; 4],
    /// `S_α = ½ e_{αβγδ} p^β M^{γδ}`.
    pub spin: [f64; 4],
    /// `|g^{αβ} p_α p_β|`.
    pub null_residual: f64,
    /// `max |S_α − s p_α|`.
    pub spin_residual: f64,
    /// Largest imaginary part met while converting `p` and `M` to tensors.
    pub reality: f64,
}

/// `s = ½ Z^α Z̄_α = Re(ω^A π̄_A)`.
pub fn spirality(z: &TwistorValue) -> f64 {
    (z.omega[0] * z.pi[0].conj() + z.omega[1] * z.pi[1].conj()).re
}

fn levi_civita_sign(p: [usize; 4]) -> f64 {
    let mut s = 1.0;
    for i in 0..4 {
        for j in i + 1..4 {
            if p[i] == p[j] {
                return 0.0;
            }
            if p[i] > p[j] {
                s = -s;
            }
        }
    }
    s
}

/// Spirality and particle kinematics of `z` against a soldering `s`.
pub fn spirality_and_kinematics(z: &TwistorValue, s: &Soldering) -> Result<Kinematics> {
    let (om, pi) = (z.omega, z.pi);
    if pi[0].norm() + pi[1].norm() < 1e-14 {
        return Err(Error::ZeroPi);
    }
    let mut reality: f64 = 0.0;
    let mut pspin = [[ZERO; 2]; 2];
    for a in 0..2 {
        for ap in 0..2 {
            pspin[a][ap] = pi[a].conj() * pi[ap];
        }
    }
    let pc = s.spinor_to_covector(&pspin);
    let mut p = [0.0; 4];
    for k in 0..4 {
        p[k] = pc[k].re;
        reality = reality.max(pc[k].im.abs());
    }
    // π̄^B = ε^{BC} π̄_C, π^{B'} = ε^{B'C'} π_{C'}
    let pib: [C64; 2] = std::array::from_fn(|b| (0..2).map(|cc| pi[cc].conj() * eps(b, cc)).sum());
    let piu: [C64; 2] = std::array::from_fn(|b| (0..2).map(|cc| pi[cc] * eps(b, cc)).sum());
    let omb = [om[0].conj(), om[1].conj()];
    let mspin = |a: usize, ap: usize, b: usize, bp: usize| {
        I * 0.5 * (om[a] * pib[b] + om[b] * pib[a]) * eps(ap, bp) - I * 0.5 * (omb[ap] * piu[bp] + omb[bp] * piu[ap]) * eps(a, b)
    };
    let mut m = [[0.0; 4]; 4];
    for al in 0..4 {
        for be in 0..4 {
            let mut acc = ZERO;
            for a in 0..2 {
                for ap in 0..2 {
                    for b in 0..2 {
                        for bp in 0..2 {
                            acc += s.sigma_dual[al][a][ap] * s.sigma_dual[be][b][bp] * mspin(a, ap, b, bp);
                        }
                    }
                }
            }
            m[al][be] = acc.re;
            reality = reality.max(acc.im.abs());
        }
    }
    let g = s.metric();
    let ginv = g.clone().try_inverse().ok_or_else(|| Error::SingularMetric("block metric".into()))?;
    let pu: Vec<f64> = (0..4).map(|a| (0..4).map(|b| ginv[(a, b)] * p[b]).sum()).collect();
    let null_residual = (0..4).map(|a| pu[a] * p[a]).sum::<f64>().abs();
    let vol = g.determinant().abs().sqrt();
    let spir = spirality(z);
    let mut spin = [0.0; 4];
    for al in 0..4 {
        let mut acc = 0.0;
        for be in 0..4 {
            for ga in 0..4 {
                for de in 0..4 {
                    let e = levi_civita_sign([al, be, ga, de]);
                    if e != 0.0 {
                        acc += e * pu[be] * m[ga][de];
                    }
                }
            }
        }
        spin[al] = 0.5 * vol * acc;
    }
    let spin_residual = (0..4).fold(0.0_f64, |w, a| w.max((spin[a] - spir * p[a]).abs()));
    Ok(Kinematics {
        s: spir,
        p,
        m,
        spin,
        null_residual,
        spin_residual,
        reality,
    })
}

/// Local twistor transform under `ĝ = ϖ² g`: `ω̂ = ω`,
/// `π̂_{A'} = π_{A'} + i Υ_{AA'} ω^A`.
pub fn conformal_twistor(z: &TwistorValue, upsilon: &Mat2) -> TwistorValue {
    let mut out = *z;
    for ap in 0..2 {
        out.pi[ap] = z.pi[ap] + I * (upsilon[0][ap] * z.omega[0] + upsilon[1][ap] * z.omega[1]);
    }
    out
}

/// `|s(Ẑ) − s(Z)|` under the rescaling by `factor`, on a 4-dimensional
/// chart.
pub fn spirality_conformal_residual(z: &TwistorValue, src: Arc<dyn DMetricSource>, factor: &ConformalFactor, point: &[f64]) -> Result<f64> {
    let s = spin::build_soldering(src.as_ref(), point)?;
    let (_, ups) = crate::conformal::conformal_rescale(src, factor, point)?;
    let u: Vec<C64> = ups.data.iter().map(|&x| C64::new(x, 0.0)).collect();
    let zh = conformal_twistor(z, &s.covector_to_spinor(&u));
    Ok((spirality(&zh) - spirality(z)).abs())
}

/// A 4×4 complex matrix acting on `(ω⁰, ω¹, π_{0'}, π_{1'})`.
pub type Mat4 = [[C64; 4]; 4];

fn mat_vec(a: &Mat4, v: &[C64; 4]) -> [C64; 4] {
    std::array::from_fn(|i| (0..4).map(|k| a[i][k] * v[k]).sum())
}

fn identity4() -> Mat4 {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { C64::new(1.0, 0.0) } else { ZERO }))
}

/// The local twistor connection at a point: `A_α` for every adapted
/// direction, so that a parallel twistor obeys `dZ/dτ = −t^α A_α Z`.
#[derive(Clone, Debug)]
pub struct TwistorConnection {
    pub point: Vec<f64>,
    pub coframe: DMatrix<f64>,
    pub a: Vec<Mat4>,
}

impl TwistorConnection {
    pub fn at(src: &dyn DMetricSource, kind: ConnectionKind, point: &[f64]) -> Result<TwistorConnection> {
        let conn = connection_at(src, kind, point, 1)?;
        let frame = block_frame(&conn, Block::Total)?;
        let p = weyl_of(&conn)?.p;
        let s = &frame.solder;
        let mut a = Vec::with_capacity(4);
        for al in 0..4 {
            let g = frame.gamma[al];
            let mut m = [[ZERO; 4]; 4];
            for b in 0..2 {
                for cc in 0..2 {
                    m[b][cc] = g[b][cc];
                    m[2 + b][2 + cc] = -g[cc][b].conj();
                }
                for ap in 0..2 {
                    m[b][2 + ap] = I * s.sigma[al][b][ap];
                }
            }
            for b in 0..2 {
                for bp in 0..2 {
                    let pb: C64 = (0..4).map(|be| s.sigma_dual[be][b][bp] * p.get(&[al, be])).sum();
                    m[2 + bp][b] = I * P_SIGN * pb;
                }
            }
            a.push(m);
        }
        let coframe = FramePair::from_n(&src.jets(point, 0)?.n_values(), point).coframe;
        Ok(TwistorConnection {
            point: point.to_vec(),
            coframe,
            a,
        })
    }

    /// `−t^α A_α` for a tangent `velocity` in coordinate components.
    pub fn generator(&self, velocity: &[f64]) -> Mat4 {
        let t: Vec<f64> = (0..4).map(|al| (0..4).map(|mu| self.coframe[(al, mu)] * velocity[mu]).sum()).collect();
        std::array::from_fn(|i| std::array::from_fn(|j| -(0..4).map(|al| self.a[al][i][j] * t[al]).sum::<C64>()))
    }
}

/// A parametrized curve on `τ ∈ [0, 1]` with its coordinate velocity.
pub trait Path: Sync {
    fn point(&self, tau: f64) -> Vec<f64>;
    fn velocity(&self, tau: f64) -> Vec<f64>;
}

/// `u(τ) = c₀ + c₁τ + c₂τ² + c₃τ³`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cubic {
    pub coeffs: [Vec<f64>; 4],
}

impl Cubic {
    pub fn line(start: &[f64], end: &[f64]) -> Cubic {
        let d = start.len();
        Cubic {
            coeffs: [
                start.to_vec(),
                end.iter().zip(start).map(|(e, s)| e - s).collect(),
                vec![0.0; d],
                vec![0.0; d],
            ],
        }
    }
}

impl Path for Cubic {
    fn point(&self, tau: f64) -> Vec<f64> {
        let c = &self.coeffs;
        (0..c[0].len())
            .map(|k| c[0][k] + tau * (c[1][k] + tau * (c[2][k] + tau * c[3][k])))
            .collect()
    }

    fn velocity(&self, tau: f64) -> Vec<f64> {
        let c = &self.coeffs;
        (0..c[0].len()).map(|k| c[1][k] + tau * (2.0 * c[2][k] + 3.0 * tau * c[3][k])).collect()
    }
}

/// Piecewise-cubic path; piece `k` covers `τ ∈ [k, k+1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseCubic {
    pub pieces: Vec<Cubic>,
}

impl PiecewiseCubic {
    pub fn polyline(vertices: &[Vec<f64>]) -> PiecewiseCubic {
        PiecewiseCubic {
            pieces: vertices.windows(2).map(|w| Cubic::line(&w[0], &w[1])).collect(),
        }
    }
}

fn check_finite(m: &[C64], tau: f64) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::StepFailure(format!("non-finite twistor at tau = {tau}")))
    }
}

/// Classical RK4 for `Y' = G(τ) Y` over `[0, 1]` with `steps` steps, on a
/// set of columns. Returns the columns after every step.
fn rk4_columns(path: &dyn Path, src: &dyn DMetricSource, kind: ConnectionKind, cols: &[[C64; 4]], steps: usize) -> Result<Vec<Vec<[C64; 4]>>> {
    if steps == 0 {
        return Err(Error::Validation("transport needs at least one step".into()));
    }
    let gen = |tau: f64| -> Result<Mat4> { Ok(TwistorConnection::at(src, kind, &path.point(tau))?.generator(&path.velocity(tau))) };
    let h = 1.0 / steps as f64;
    let mut y = cols.to_vec();
    let mut out = vec![y.clone()];
    let mut g0 = gen(0.0)?;
    for k in 0..steps {
        let tau = k as f64 * h;
        let gm = gen(tau + 0.5 * h)?;
        let g1 = gen(tau + h)?;
        for col in y.iter_mut() {
            let k1 = mat_vec(&g0, col);
            let y2: [C64; 4] = std::array::from_fn(|i| col[i] + k1[i] * (0.5 * h));
            let k2 = mat_vec(&gm, &y2);
            let y3: [C64; 4] = std::array::from_fn(|i| col[i] + k2[i] * (0.5 * h));
            let k3 = mat_vec(&gm, &y3);
            let y4: [C64; 4] = std::array::from_fn(|i| col[i] + k3[i] * h);
            let k4 = mat_vec(&g1, &y4);
            *col = std::array::from_fn(|i| col[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0));
            check_finite(col, tau + h)?;
        }
        out.push(y.clone());
        g0 = g1;
    }
    Ok(out)
}

/// Transports `z0` along `path` over `τ ∈ [0, 1]`; returns `steps + 1`
/// values including the start.
pub fn twistor_transport(
    z0: &TwistorValue,
    path: &dyn Path,
    src: &dyn DMetricSource,
    kind: ConnectionKind,
    steps: usize,
) -> Result<Vec<TwistorValue>> {
    if src.chart().dim() != 4 {
        return Err(Error::WrongDimension(format!(
            "transport needs a 4-dimensional chart, got {}",
            src.chart().dim()
        )));
    }
    // a dual twistor moves as the conjugate of a twistor
    let start = if z0.dual { z0.conjugate() } else { *z0 };
    let traj = rk4_columns(path, src, kind, &[start.to_array()], steps)?;
    Ok(traj
        .into_iter()
        .map(|c| {
            let z = TwistorValue::from_array(c[0], false);
            if z0.dual {
                z.conjugate()
            } else {
                z
            }
        })
        .collect())
}

/// Transport matrix of twistors along a piecewise path, `steps` per piece.
pub fn transport_matrix(path: &PiecewiseCubic, src: &dyn DMetricSource, kind: ConnectionKind, steps: usize) -> Result<Mat4> {
    let mut cols: Vec<[C64; 4]> = identity4().to_vec();
    for piece in &path.pieces {
        cols = rk4_columns(piece, src, kind, &cols, steps)?.pop().expect("nonempty trajectory");
    }
    // columns of the identity were transported as rows; transpose back
    Ok(std::array::from_fn(|i| std::array::from_fn(|j| cols[j][i])))
}

/// Curvature of the local twistor transport for a pair of adapted
/// directions `(t, v)`, in the layout `k[α][β]` with row `α` the input
/// component and column `β` the output component, so the lower-left
/// `(π ← ω)` block vanishes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistorCurvature {
    pub k: Mat4,
}

impl TwistorCurvature {
    pub fn lower_left(&self) -> f64 {
        let mut m: f64 = 0.0;
        for a in 2..4 {
            for b in 0..2 {
                m = m.max(self.k[a][b].norm());
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.k.iter().flatten().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn max_diff(&self, other: &TwistorCurvature) -> f64 {
        self.k
            .iter()
            .flatten()
            .zip(other.k.iter().flatten())
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }
}

/// The curvature matrix from `Ψ`, `Ψ̄` and `D_{[a}P_{b]c}` at `point`, for
/// adapted directions `t`, `v`. Needs a 4-dimensional chart.
pub fn twistor_curvature(src: &dyn DMetricSource, kind: ConnectionKind, t: &[f64], v: &[f64], point: &[f64]) -> Result<TwistorCurvature> {
    let conn = connection_at(src, kind, point, 2)?;
    let frame = block_frame(&conn, Block::Total)?;
    let s = &frame.solder;
    let (cs, _) = curvature_spinors(&lowered_curvature(&conn)?, s)?;
    let psi = &cs.psi;
    let tc: Vec<C64> = t.iter().map(|&x| C64::new(x, 0.0)).collect();
    let vc: Vec<C64> = v.iter().map(|&x| C64::new(x, 0.0)).collect();
    let (ts, vs) = (s.vector_to_spinor(&tc), s.vector_to_spinor(&vc));
    // τ^{MN} = ε_{M'N'} t^{MM'} v^{NN'} and its primed counterpart
    let mut tau = [[ZERO; 2]; 2];
    let mut taup = [[ZERO; 2]; 2];
    for mm in 0..2 {
        for nn in 0..2 {
            for mp in 0..2 {
                for np in 0..2 {
                    tau[mm][nn] += ts[mm][mp] * vs[nn][np] * eps(mp, np);
                    taup[mp][np] += ts[mm][mp] * vs[nn][np] * eps(mm, nn);
                }
            }
        }
    }
    let mut k = [[ZERO; 4]; 4];
    for a in 0..2 {
        for b in 0..2 {
            let mut s1 = ZERO;
            let mut s2 = ZERO;
            for mm in 0..2 {
                for nn in 0..2 {
                    for cc in 0..2 {
                        let e = eps(b, cc);
                        if e == 0.0 {
                            continue;
                        }
                        s1 += tau[mm][nn] * psi.get(&[a, mm, nn, cc]) * e;
                    }
                    for cc in 0..2 {
                        let e = eps(a, cc);
                        if e != 0.0 {
                            s2 += taup[mm][nn] * psi.get(&[b, mm, nn, cc]).conj() * e;
                        }
                    }
                }
            }
            k[a][b] = I * PSI_COUPLING * s1;
            k[2 + a][2 + b] = -I * PSI_COUPLING * s2;
        }
    }
    // D_{[a}P_{b]c} contracted with t^a v^b
    let r = conn.curvature()?;
    let (ric, sr) = ricci_jets(&conn, &r);
    let dp = covariant_rank2(&conn, &p_jets(&conn, &ric, &sr));
    let mut w = [ZERO; 4];
    for (cc, wc) in w.iter_mut().enumerate() {
        let mut acc = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                acc += (t[a] * v[b] - t[b] * v[a]) * dp[(a * 4 + b) * 4 + cc];
            }
        }
        *wc = C64::new(acc, 0.0);
    }
    let ws = s.covector_to_spinor(&w);
    for d in 0..2 {
        for cp in 0..2 {
            k[d][2 + cp] = -DP_COUPLING * P_SIGN * ws[d][cp];
        }
    }
    Ok(TwistorCurvature { k })
}

/// Holonomy estimate of the curvature matrix: transport around the
/// parallelogram spanned by `eps·t`, `eps·v` (adapted components), centred
/// at `point` and reached along a spoke, gives `H ≈ I − eps² F`; the
/// estimate `K = i Fᵀ` is Richardson-extrapolated over `eps`, `eps/2`,
/// `eps/4`.
pub fn holonomy_curvature(
    src: &dyn DMetricSource,
    kind: ConnectionKind,
    t: &[f64],
    v: &[f64],
    point: &[f64],
    eps: f64,
    steps: usize,
) -> Result<TwistorCurvature> {
    let frame = FramePair::from_n(&src.jets(point, 0)?.n_values(), point).frame;
    let d = point.len();
    let coord = |x: &[f64]| -> Vec<f64> { (0..d).map(|mu| (0..d).map(|al| x[al] * frame[(al, mu)]).sum()).collect() };
    let (tc, vc) = (coord(t), coord(v));
    let estimate = |e: f64| -> Result<Mat4> {
        let corner = |a: f64, b: f64| -> Vec<f64> { (0..d).map(|mu| point[mu] + e * (a * tc[mu] + b * vc[mu])).collect() };
        let verts = vec![
            point.to_vec(),
            corner(-0.5, -0.5),
            corner(0.5, -0.5),
            corner(0.5, 0.5),
            corner(-0.5, 0.5),
            corner(-0.5, -0.5),
            point.to_vec(),
        ];
        let h = transport_matrix(&PiecewiseCubic::polyline(&verts), src, kind, steps)?;
        let id = identity4();
        Ok(std::array::from_fn(|i| std::array::from_fn(|j| (id[i][j] - h[i][j]) / (e * e))))
    };
    let f = [estimate(eps)?, estimate(eps / 2.0)?, estimate(eps / 4.0)?];
    // remove the e² and e⁴ terms
    let mut k = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let r1 = (f[1][i][j] * 4.0 - f[0][i][j]) / 3.0;
            let r2 = (f[2][i][j] * 4.0 - f[1][i][j]) / 3.0;
            k[j][i] = I * (r2 * 16.0 - r1) / 15.0;
        }
    }
    Ok(TwistorCurvature { k })
}

/// One block of [`finsler_twistor_blocks`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockTwistor {
    pub solution: TwistorValue,
    /// Max-norm of the twistor residual of the closed-form ω field.
    pub residual: f64,
}

#[derive(Debug)]
pub struct FinslerTwistors {
    /// `[Ψ̃_h ω_h, X̃_{(IJK)D} ω_v^D, Ψ̃_v ω_v]`.
    pub compatibility: [f64; 3],
    pub h: Result<BlockTwistor>,
    pub v: Result<BlockTwistor>,
}

/// Blockwise twistors on an n = m = 4 scenario: each block is certified
/// from its compatibility residuals, then the closed-form solution through
/// `z_h` (resp. `z_v`) at `origin` is evaluated at `point` together with its
/// twistor residual.
pub fn finsler_twistor_blocks(
    src: Arc<dyn DMetricSource>,
    kind: ConnectionKind,
    origin: &[f64],
    z_h: &TwistorValue,
    z_v: &TwistorValue,
    point: &[f64],
) -> Result<FinslerTwistors> {
    let chart = src.chart();
    if chart.n != 4 || chart.m != 4 {
        return Err(Error::WrongDimension(format!(
            "blockwise twistors need n = m = 4, got {}+{}",
            chart.n, chart.m
        )));
    }
    let compat = finsler_twistor_compatibility(src.as_ref(), kind, z_h.omega, z_v.omega, point)?;
    let solve = |block: Block, z: &TwistorValue, gate: f64| -> Result<BlockTwistor> {
        if gate >= CERTIFY_TOL {
            return Err(Error::IncompatibleBackground(gate));
        }
        let chart = FlatChart::new(src.clone(), kind, block, origin)?;
        let solution = flat_twistor_solution(&chart, z, point)?;
        let field = chart.omega_field(z);
        let residual = twistor_residual(&field, src.as_ref(), kind, block, point)?.max_abs();
        Ok(BlockTwistor { solution, residual })
    };
    let h = solve(Block::H, z_h, compat[0]);
    let v = solve(Block::V, z_v, compat[1].max(compat[2]));
    Ok(FinslerTwistors { compatibility: compat, h, v })
}
