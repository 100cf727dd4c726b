//! Two-spinor calculus on four-dimensional Lorentzian blocks: soldering
//! forms over an orthonormal N-adapted tetrad, tensor/spinor conversion,
//! curvature spinors and the spinor Bianchi identities.
//!
//! Conventions:
//! * `ε_{01} = ε^{01} = +1` for primed and unprimed spinors, `κ^A = ε^{AB}κ_B`,
//!   `κ_B = κ^A ε_{AB}`;
//! * tetrad legs are ordered `(+,+,+,−)` and positively oriented with
//!   respect to the adapted frame;
//! * the flat soldering is the hermitian Infeld–van der Waerden set scaled by
//!   `1/√2`, for which `g_{αβ} = −γ_α^{AA'} γ_β^{BB'} ε_{AB} ε_{A'B'}`
//!   (see [`METRIC_SIGN`]).

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::conformal::{curvature_derivative, lower_first, weyl_dtensor, ConformalFactor, Rescaled};
use crate::connections::{connection_at, Connection, ConnectionKind};
use crate::error::{Error, Result};
use crate::geometry::DMetricSource;
use crate::jets::Jet;
use crate::tensor::{Block, Role, TensorBlock, Variance};

/// A 2×2 complex array indexed `[A][A']` or `[A][B]`.
pub type Mat2 = [[C64; 2]; 2];

pub const EPSILON: [[f64; 2]; 2] = [[0.0, 1.0], [-1.0, 0.0]];

/// `g_{αβ} = METRIC_SIGN · γ_α^{AA'} γ_β^{BB'} ε_{AB} ε_{A'B'}`.
pub const METRIC_SIGN: f64 = -1.0;

/// `Λ = LAMBDA_SIGN · X_{AB}{}^{AB} / 6`, fixed so that `Λ = sR/24`.
pub const LAMBDA_SIGN: f64 = -1.0;

/// Pair-symmetry tolerance above which curvature spinors are refused.
pub const SYMMETRY_TOL: f64 = 1e-6;

const ZERO: C64 = C64::new(0.0, 0.0);

fn eps(a: usize, b: usize) -> f64 {
    EPSILON[a][b]
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `σ_{a'}^{AA'}` for the legs `(x, y, z, t)`.
pub fn flat_sigma() -> [Mat2; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        [[ZERO, c(s, 0.0)], [c(s, 0.0), ZERO]],
        [[ZERO, c(0.0, s)], [c(0.0, -s), ZERO]],
        [[c(s, 0.0), ZERO], [ZERO, c(-s, 0.0)]],
        [[c(s, 0.0), ZERO], [ZERO, c(s, 0.0)]],
    ]
}

/// `σ^{a'}_{AA'}`, dual to [`flat_sigma`] under the full contraction over
/// `A, A'`. The set is trace-orthonormal, so the dual is the conjugate.
pub fn flat_sigma_dual() -> [Mat2; 4] {
    let mut out = flat_sigma();
    for m in out.iter_mut() {
        for row in m.iter_mut() {
            for x in row.iter_mut() {
                *x = x.conj();
            }
        }
    }
    out
}

/// Orthonormal legs over a set of adapted indices as jets, `legs[a'][k]`
/// being the component of leg `a'` along `indices[k]`.
struct Legs {
    legs: Vec<Vec<Jet>>,
    eta: [f64; 4],
}

/// Gram–Schmidt block by block in the given index order; spacelike legs are
/// moved in front of the timelike one and the first leg is flipped if
/// needed so that the tetrad is positively oriented.
fn gram_schmidt(metric: &dyn Fn(usize, usize) -> Jet, blocks: &[Vec<usize>]) -> Result<Legs> {
    let indices: Vec<usize> = blocks.concat();
    let k = indices.len();
    if k != 4 {
        return Err(Error::WrongDimension(format!("spinors need a 4-dimensional block, got {k}")));
    }
    let proto = metric(indices[0], indices[0]);
    let (nv, order) = (proto.nvars(), proto.order());
    let inner = |u: &[Jet], v: &[Jet]| -> Jet {
        let mut s = Jet::zero(nv, order);
        for p in 0..k {
            for q in 0..k {
                if u[p].max_abs_coeff() == 0.0 || v[q].max_abs_coeff() == 0.0 {
                    continue;
                }
                s += &(&u[p] * &v[q]) * &metric(indices[p], indices[q]);
            }
        }
        s
    };
    let mut legs: Vec<(Vec<Jet>, f64)> = Vec::with_capacity(4);
    let mut start = 0;
    for b in blocks {
        let first = legs.len();
        for p in start..start + b.len() {
            let mut w: Vec<Jet> = (0..k).map(|q| Jet::constant(nv, order, if q == p { 1.0 } else { 0.0 })).collect();
            for (u, s) in &legs[first..] {
                let proj = inner(&w, u) * *s;
                for q in 0..k {
                    w[q] -= &(&proj * &u[q]);
                }
            }
            let nrm = inner(&w, &w);
            if nrm.value().abs() < 1e-10 {
                return Err(Error::SingularMetric("null pivot in Gram–Schmidt".into()));
            }
            let sign = nrm.value().signum();
            let scale = nrm.abs()?.powf(-0.5)?;
            legs.push((w.iter().map(|x| x * &scale).collect(), sign));
        }
        start += b.len();
    }
    let plus = legs.iter().filter(|l| l.1 > 0.0).count();
    if plus != 3 {
        return Err(Error::WrongSignature(format!("block has {plus} positive directions, expected 3")));
    }
    legs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let vals = DMatrix::from_fn(4, 4, |a, q| legs[a].0[q].value());
    if vals.determinant() < 0.0 {
        for x in legs[0].0.iter_mut() {
            *x = -&*x;
        }
    }
    Ok(Legs {
        eta: [legs[0].1, legs[1].1, legs[2].1, legs[3].1],
        legs: legs.into_iter().map(|l| l.0).collect(),
    })
}

/// Soldering of one 4-dimensional block at a point.
#[derive(Clone, Debug)]
pub struct Soldering {
    pub block: Block,
    /// Adapted indices covered by this soldering.
    pub indices: Vec<usize>,
    /// Row `a'` holds the leg `E_{a'}` in adapted components.
    pub tetrad: DMatrix<f64>,
    pub eta: [f64; 4],
    /// `γ_α^{AA'}` for each soldered index.
    pub sigma: [Mat2; 4],
    /// `γ^α_{AA'}`, with `Σ γ^α_{AA'} γ_β^{AA'} = δ^α_β`.
    pub sigma_dual: [Mat2; 4],
    pub epsilon: [[f64; 2]; 2],
}

impl Soldering {
    pub fn from_tetrad(block: Block, indices: Vec<usize>, tetrad: DMatrix<f64>, eta: [f64; 4]) -> Result<Soldering> {
        let theta = tetrad
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularMetric("degenerate tetrad".into()))?;
        let (fs, fd) = (flat_sigma(), flat_sigma_dual());
        let mut sigma = [[[ZERO; 2]; 2]; 4];
        let mut sigma_dual = [[[ZERO; 2]; 2]; 4];
        for al in 0..4 {
            for a in 0..2 {
                for ap in 0..2 {
                    for l in 0..4 {
                        sigma[al][a][ap] += fs[l][a][ap] * theta[(al, l)];
                        sigma_dual[al][a][ap] += fd[l][a][ap] * tetrad[(l, al)];
                    }
                }
            }
        }
        Ok(Soldering {
            block,
            indices,
            tetrad,
            eta,
            sigma,
            sigma_dual,
            epsilon: EPSILON,
        })
    }

    /// `max |g_{αβ} − METRIC_SIGN γ_α γ_β ε ε|` against the block metric `g`.
    pub fn reconstruction_residual(&self, g: &DMatrix<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for al in 0..4 {
            for be in 0..4 {
                let mut s = ZERO;
                for a in 0..2 {
                    for b in 0..2 {
                        for ap in 0..2 {
                            for bp in 0..2 {
                                s += self.sigma[al][a][ap] * self.sigma[be][b][bp] * (eps(a, b) * eps(ap, bp));
                            }
                        }
                    }
                }
                worst = worst.max((g[(al, be)] - METRIC_SIGN * s).norm());
            }
        }
        worst
    }

    /// `v^{AA'}` of a vector with block components `v^α`.
    pub fn vector_to_spinor(&self, v: &[C64]) -> Mat2 {
        let mut out = [[ZERO; 2]; 2];
        for (al, x) in v.iter().enumerate() {
            for a in 0..2 {
                for ap in 0..2 {
                    out[a][ap] += self.sigma[al][a][ap] * x;
                }
            }
        }
        out
    }

    /// `w_{AA'}` of a covector with block components `w_α`.
    pub fn covector_to_spinor(&self, w: &[C64]) -> Mat2 {
        let mut out = [[ZERO; 2]; 2];
        for (al, x) in w.iter().enumerate() {
            for a in 0..2 {
                for ap in 0..2 {
                    out[a][ap] += self.sigma_dual[al][a][ap] * x;
                }
            }
        }
        out
    }

    /// `v^α` from `v^{AA'}`.
    pub fn spinor_to_vector(&self, x: &Mat2) -> [C64; 4] {
        let mut out = [ZERO; 4];
        for (al, o) in out.iter_mut().enumerate() {
            for a in 0..2 {
                for ap in 0..2 {
                    *o += self.sigma_dual[al][a][ap] * x[a][ap];
                }
            }
        }
        out
    }

    /// `w_α` from `w_{AA'}`.
    pub fn spinor_to_covector(&self, x: &Mat2) -> [C64; 4] {
        let mut out = [ZERO; 4];
        for (al, o) in out.iter_mut().enumerate() {
            for a in 0..2 {
                for ap in 0..2 {
                    *o += self.sigma[al][a][ap] * x[a][ap];
                }
            }
        }
        out
    }

    /// Block metric `g_{αβ}` rebuilt from the tetrad, `E^T η E` inverted.
    pub fn metric(&self) -> DMatrix<f64> {
        let theta = self.tetrad.clone().try_inverse().expect("tetrad is invertible");
        let eta = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&self.eta));
        &theta * eta * theta.transpose()
    }
}

fn block_indices(n: usize, m: usize, block: Block) -> Vec<Vec<usize>> {
    match block {
        Block::Total => vec![(0..n).collect(), (n..n + m).collect()],
        Block::H => vec![(0..n).collect()],
        Block::V => vec![(n..n + m).collect()],
    }
}

fn soldering_from_legs(block: Block, blocks: &[Vec<usize>], legs: &Legs) -> Result<Soldering> {
    let tetrad = DMatrix::from_fn(4, 4, |a, q| legs.legs[a][q].value());
    Soldering::from_tetrad(block, blocks.concat(), tetrad, legs.eta)
}

/// Soldering of a 2+2 Lorentzian chart at `point`.
pub fn build_soldering(src: &dyn DMetricSource, point: &[f64]) -> Result<Soldering> {
    let chart = src.chart();
    if chart.dim() != 4 {
        return Err(Error::WrongDimension(format!(
            "spinor suite needs a 4-dimensional chart, got {}",
            chart.dim()
        )));
    }
    let neg = chart.signature.iter().filter(|&&s| s < 0).count();
    if neg != 1 {
        return Err(Error::WrongSignature(format!("signature {:?} is not Lorentzian", chart.signature)));
    }
    let j = src.jets(point, 0)?;
    let geo = crate::geometry::Adapted::new(&j)?;
    block_soldering_geo(&geo, Block::Total)
}

fn block_soldering_geo(geo: &crate::geometry::Adapted, block: Block) -> Result<Soldering> {
    let blocks = block_indices(geo.n, geo.m, block);
    let legs = gram_schmidt(&|a, b| geo.g(a, b).truncate(0), &blocks)?;
    soldering_from_legs(block, &blocks, &legs)
}

/// Soldering and spin connection `Γ_α{}^A{}_B` (one per adapted direction α)
/// induced from a metric-compatible connection, so that the soldering and
/// `ε` are parallel.
#[derive(Clone, Debug)]
pub struct SpinFrame {
    pub solder: Soldering,
    pub gamma: Vec<Mat2>,
    /// Tetrad connection `ω^{a'}_{b'α}`, indexed `[α][a'][b']`.
    pub omega: Vec<[[f64; 4]; 4]>,
}

pub fn spin_frame(conn: &Connection, block: Block) -> Result<SpinFrame> {
    let geo = &conn.geo;
    let d = conn.dim();
    let blocks = block_indices(geo.n, geo.m, block);
    let idx: Vec<usize> = blocks.concat();
    let legs = gram_schmidt(&|a, b| geo.g(a, b).clone(), &blocks)?;
    let solder = soldering_from_legs(block, &blocks, &legs)?;
    let theta = solder.tetrad.clone().try_inverse().expect("tetrad is invertible");
    let (fs, fd) = (flat_sigma(), flat_sigma_dual());
    let mut gamma = Vec::with_capacity(d);
    let mut omega = Vec::with_capacity(d);
    for al in 0..d {
        // ω^{a'}_{b'α} = θ^{a'}_μ (e_α E_{b'}^μ + E_{b'}^β Γ^μ_{βα})
        let mut om = [[0.0; 4]; 4];
        for bp in 0..4 {
            let mut de = [0.0; 4];
            for mu in 0..4 {
                let mut s = geo.e(al, &legs.legs[bp][mu]).value();
                for be in 0..4 {
                    s += legs.legs[bp][be].value() * conn.gamma(idx[mu], idx[be], al).value();
                }
                de[mu] = s;
            }
            for ap in 0..4 {
                om[ap][bp] = (0..4).map(|mu| theta[(mu, ap)] * de[mu]).sum();
            }
        }
        let mut g = [[ZERO; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for ap in 0..4 {
                    for bp in 0..4 {
                        if om[ap][bp] == 0.0 {
                            continue;
                        }
                        for x in 0..2 {
                            g[a][b] += fs[ap][a][x] * fd[bp][b][x] * (0.5 * om[ap][bp]);
                        }
                    }
                }
            }
        }
        gamma.push(g);
        omega.push(om);
    }
    Ok(SpinFrame { solder, gamma, omega })
}

impl SpinFrame {
    /// `max |Γ^A_C σ_{b'}^{CA'} + Γ̄^{A'}_{C'} σ_{b'}^{AC'} − ω^{a'}_{b'α} σ_{a'}^{AA'}|`
    /// over directions and legs, i.e. how far the flat soldering is from
    /// being parallel, together with the failure of `ω_{a'b'}` to be
    /// antisymmetric.
    pub fn parallel_residual(&self) -> f64 {
        let fs = flat_sigma();
        let mut worst: f64 = 0.0;
        for (g, om) in self.gamma.iter().zip(&self.omega) {
            for bp in 0..4 {
                for a in 0..2 {
                    for ap in 0..2 {
                        let mut s = ZERO;
                        for cc in 0..2 {
                            s += g[a][cc] * fs[bp][cc][ap];
                            s += g[ap][cc].conj() * fs[bp][a][cc];
                        }
                        for l in 0..4 {
                            s -= fs[l][a][ap] * om[l][bp];
                        }
                        worst = worst.max(s.norm());
                    }
                }
                for l in 0..4 {
                    let anti = self.solder.eta[l] * om[l][bp] + self.solder.eta[bp] * om[bp][l];
                    worst = worst.max(anti.abs());
                }
            }
        }
        worst
    }
}

fn solder_for<'a>(solders: &[&'a Soldering], role: Role) -> Result<&'a Soldering> {
    solders
        .iter()
        .find(|s| s.block.role() == role)
        .copied()
        .ok_or_else(|| Error::RoleMismatch(format!("no soldering for {role:?} indices")))
}

/// Applies a 4×4 matrix `mat[out][in]` along one axis of extent 4.
fn apply_axis(data: &[C64], dims: &[usize], axis: usize, mat: &[[C64; 4]; 4]) -> Vec<C64> {
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut out = vec![ZERO; data.len()];
    for o in 0..outer {
        for p in 0..4 {
            for q in 0..4 {
                let m = mat[p][q];
                if m == ZERO {
                    continue;
                }
                let src = (o * 4 + q) * inner;
                let dst = (o * 4 + p) * inner;
                for i in 0..inner {
                    out[dst + i] += m * data[src + i];
                }
            }
        }
    }
    out
}

fn flat_dims(dims: &[usize]) -> Vec<usize> {
    dims.chunks(2).map(|c| c[0] * c[1]).collect()
}

/// Replaces every tensor index by a pair `(A, A')`. Each index must have a
/// role covered by one of `solders`.
pub fn to_spinor(t: &TensorBlock, solders: &[&Soldering]) -> Result<TensorBlock<C64>> {
    let mut data: Vec<C64> = t.data.iter().map(|&x| c(x, 0.0)).collect();
    let mut dims = Vec::new();
    let mut roles = Vec::new();
    let mut variance = Vec::new();
    for k in 0..t.rank() {
        let s = solder_for(solders, t.roles[k])?;
        if t.dims[k] != 4 {
            return Err(Error::RoleMismatch(format!("index {k} has extent {}", t.dims[k])));
        }
        let mut mat = [[ZERO; 4]; 4];
        for al in 0..4 {
            for p in 0..4 {
                mat[p][al] = match t.variance[k] {
                    Variance::Up => s.sigma[al][p / 2][p % 2],
                    Variance::Down => s.sigma_dual[al][p / 2][p % 2],
                };
            }
        }
        data = apply_axis(&data, &t.dims, k, &mat);
        dims.extend([2, 2]);
        roles.extend([Role::Unprimed(s.block), Role::Primed(s.block)]);
        variance.extend([t.variance[k], t.variance[k]]);
    }
    Ok(TensorBlock::from_data(&dims, &variance, &roles, data))
}

/// Inverse of [`to_spinor`]: pairs `(A, A')` back to tensor indices.
pub fn to_tensor(t: &TensorBlock<C64>, solders: &[&Soldering]) -> Result<TensorBlock<C64>> {
    if !t.rank().is_multiple_of(2) {
        return Err(Error::RoleMismatch("spinor block has an odd number of slots".into()));
    }
    let fdims = flat_dims(&t.dims);
    let mut data = t.data.clone();
    let mut roles = Vec::new();
    let mut variance = Vec::new();
    for k in 0..fdims.len() {
        let (r0, r1) = (t.roles[2 * k], t.roles[2 * k + 1]);
        let block = match (r0, r1) {
            (Role::Unprimed(a), Role::Primed(b)) if a == b => a,
            _ => return Err(Error::RoleMismatch(format!("slots {} and {} are not an (A, A') pair", 2 * k, 2 * k + 1))),
        };
        let s = solder_for(solders, block.role())?;
        let mut mat = [[ZERO; 4]; 4];
        for al in 0..4 {
            for p in 0..4 {
                mat[al][p] = match t.variance[2 * k] {
                    Variance::Up => s.sigma_dual[al][p / 2][p % 2],
                    Variance::Down => s.sigma[al][p / 2][p % 2],
                };
            }
        }
        data = apply_axis(&data, &fdims, k, &mat);
        roles.push(block.role());
        variance.push(t.variance[2 * k]);
    }
    Ok(TensorBlock::from_data(&fdims, &variance, &roles, data))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ToSpinor,
    ToTensor,
}

/// Converts in either direction; tensor input is taken as the real part of
/// `t` when going to spinors.
pub fn tensor_spinor_convert(t: &TensorBlock<C64>, s: &Soldering, direction: Direction) -> Result<TensorBlock<C64>> {
    match direction {
        Direction::ToSpinor => {
            let re = TensorBlock::from_data(&t.dims, &t.variance, &t.roles, t.data.iter().map(|x| x.re).collect());
            let im = TensorBlock::from_data(&t.dims, &t.variance, &t.roles, t.data.iter().map(|x| x.im).collect());
            let (a, b) = (to_spinor(&re, &[s])?, to_spinor(&im, &[s])?);
            let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y * C64::i()).collect();
            Ok(TensorBlock { data, ..a })
        }
        Direction::ToTensor => to_tensor(t, &[s]),
    }
}

/// Index into an all-2 spinor array.
fn bits(ix: &[usize]) -> usize {
    ix.iter().fold(0, |acc, &b| acc * 2 + b)
}

/// `Ψ_{ABCD}`, `Φ_{ABC'D'}` and `Λ` with the residuals of their defining
/// symmetries.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvatureSpinors {
    pub psi: TensorBlock<C64>,
    pub phi: TensorBlock<C64>,
    pub lambda: f64,
    /// Imaginary part of `X_{AB}{}^{AB}/6`.
    pub lambda_imag: f64,
    /// `max |X − Ψ − Λ(εε + εε)|`.
    pub x_structure: f64,
    /// `max |Φ_{ABC'D'} − conj Φ_{CDA'B'}|` plus the index symmetries of Φ.
    pub hermiticity: f64,
    /// Max tensor-component error of the curvature rebuilt from (Ψ, Φ, Λ).
    pub reconstruction: f64,
}

/// `⁻C = Ψ ε' ε'` and `⁺C = Ψ̄ ε ε` in lowered tensor components.
#[derive(Clone, Debug)]
pub struct SelfDualSplit {
    pub minus: TensorBlock<C64>,
    pub plus: TensorBlock<C64>,
}

impl SelfDualSplit {
    /// `max |⁻C + ⁺C − C|` against a real lowered Weyl tensor.
    pub fn residual(&self, weyl: &TensorBlock) -> f64 {
        self.minus
            .data
            .iter()
            .zip(&self.plus.data)
            .zip(&weyl.data)
            .fold(0.0, |m, ((a, b), w)| m.max((a + b - w).norm()))
    }
}

/// Pair antisymmetry and pair-exchange residuals of a lowered 4-index
/// curvature.
pub fn pair_symmetry_residual(r: &TensorBlock) -> f64 {
    let mut worst: f64 = 0.0;
    for idx in r.indices() {
        let (a, b, cc, d) = (idx[0], idx[1], idx[2], idx[3]);
        let v = r.get(&idx);
        worst = worst.max((v + r.get(&[b, a, cc, d])).abs());
        worst = worst.max((v + r.get(&[a, b, d, cc])).abs());
        worst = worst.max((v - r.get(&[cc, d, a, b])).abs());
    }
    worst
}

/// Splits `¼ R` into its four `ε`-contractions over the eight spinor slots
/// `(A,A',B,B',C,C',D,D')`: returns `(X_{ABCD}, Φ_{ABC'D'})`.
fn contract_pairs(rs: &[C64], lead: usize) -> (Vec<C64>, Vec<C64>) {
    // rs is indexed [lead bits][A][A'][B][B'][C][C'][D][D']
    let lead_n = 1usize << lead;
    let mut x = vec![ZERO; lead_n * 16];
    let mut phi = vec![ZERO; lead_n * 16];
    for l in 0..lead_n {
        for a in 0..2 {
            for b in 0..2 {
                for cc in 0..2 {
                    for d in 0..2 {
                        let mut sx = ZERO;
                        let mut sp = ZERO;
                        for p in 0..2 {
                            for q in 0..2 {
                                let e = eps(p, q);
                                if e == 0.0 {
                                    continue;
                                }
                                for r in 0..2 {
                                    for s in 0..2 {
                                        let f = eps(r, s);
                                        if f == 0.0 {
                                            continue;
                                        }
                                        // X: contract A'B' and C'D'
                                        sx += rs[(l << 8) | bits(&[a, p, b, q, cc, r, d, s])] * (e * f);
                                        // Φ: contract A'B' and CD, keeping C'=cc, D'=d
                                        sp += rs[(l << 8) | bits(&[a, p, b, q, r, cc, s, d])] * (e * f);
                                    }
                                }
                            }
                        }
                        x[(l << 4) | bits(&[a, b, cc, d])] = sx * 0.25;
                        phi[(l << 4) | bits(&[a, b, cc, d])] = sp * 0.25;
                    }
                }
            }
        }
    }
    (x, phi)
}

const PERMS4: [[usize; 4]; 24] = [
    [0, 1, 2, 3],
    [0, 1, 3, 2],
    [0, 2, 1, 3],
    [0, 2, 3, 1],
    [0, 3, 1, 2],
    [0, 3, 2, 1],
    [1, 0, 2, 3],
    [1, 0, 3, 2],
    [1, 2, 0, 3],
    [1, 2, 3, 0],
    [1, 3, 0, 2],
    [1, 3, 2, 0],
    [2, 0, 1, 3],
    [2, 0, 3, 1],
    [2, 1, 0, 3],
    [2, 1, 3, 0],
    [2, 3, 0, 1],
    [2, 3, 1, 0],
    [3, 0, 1, 2],
    [3, 0, 2, 1],
    [3, 1, 0, 2],
    [3, 1, 2, 0],
    [3, 2, 0, 1],
    [3, 2, 1, 0],
];

fn symmetrize4(x: &[C64]) -> Vec<C64> {
    let mut out = vec![ZERO; 16];
    for i in 0..16 {
        let ix = [i >> 3 & 1, i >> 2 & 1, i >> 1 & 1, i & 1];
        let mut s = ZERO;
        for p in &PERMS4 {
            s += x[bits(&[ix[p[0]], ix[p[1]], ix[p[2]], ix[p[3]]])];
        }
        out[i] = s / 24.0;
    }
    out
}

/// `X_{AB}{}^{AB} = ε^{AC} ε^{BD} X_{ABCD}`.
fn x_trace(x: &[C64]) -> C64 {
    let mut s = ZERO;
    for a in 0..2 {
        for b in 0..2 {
            for cc in 0..2 {
                for d in 0..2 {
                    s += x[bits(&[a, b, cc, d])] * (eps(a, cc) * eps(b, d));
                }
            }
        }
    }
    s
}

fn lambda_part(lam: C64, a: usize, b: usize, cc: usize, d: usize) -> C64 {
    lam * (eps(a, cc) * eps(b, d) + eps(a, d) * eps(b, cc))
}

fn spinor_block(data: Vec<C64>, roles: [Role; 4]) -> TensorBlock<C64> {
    TensorBlock::from_data(&[2; 4], &[Variance::Down; 4], &roles, data)
}

/// Curvature spinors of a fully lowered curvature `R_{abcd}` (antisymmetric
/// pairs `(ab)`, `(cd)`), with the anti-selfdual/selfdual split of its
/// Weyl part.
pub fn curvature_spinors(r: &TensorBlock, s: &Soldering) -> Result<(CurvatureSpinors, SelfDualSplit)> {
    let sym = pair_symmetry_residual(r);
    if sym > SYMMETRY_TOL {
        return Err(Error::SymmetryViolation(sym));
    }
    let rs = to_spinor(r, &[s])?;
    let (x, phi) = contract_pairs(&rs.data, 0);
    let psi = symmetrize4(&x);
    let lam_raw = x_trace(&x) / 6.0;
    let mut x_structure: f64 = 0.0;
    let mut hermiticity: f64 = 0.0;
    for i in 0..16 {
        let ix = [i >> 3 & 1, i >> 2 & 1, i >> 1 & 1, i & 1];
        let rebuilt = psi[i] + lambda_part(lam_raw, ix[0], ix[1], ix[2], ix[3]);
        x_structure = x_structure.max((x[i] - rebuilt).norm());
        let swapped = phi[bits(&[ix[2], ix[3], ix[0], ix[1]])].conj();
        hermiticity = hermiticity.max((phi[i] - swapped).norm());
        hermiticity = hermiticity.max((phi[i] - phi[bits(&[ix[1], ix[0], ix[2], ix[3]])]).norm());
        hermiticity = hermiticity.max((phi[i] - phi[bits(&[ix[0], ix[1], ix[3], ix[2]])]).norm());
    }
    // Rebuild R from (Ψ, Φ, Λ) in spinor form and compare in tensor form.
    let xr = |a: usize, b: usize, cc: usize, d: usize| psi[bits(&[a, b, cc, d])] + lambda_part(lam_raw, a, b, cc, d);
    let mut rebuilt = vec![ZERO; 256];
    let mut minus = vec![ZERO; 256];
    let mut plus = vec![ZERO; 256];
    for (i, out) in rebuilt.iter_mut().enumerate() {
        let [a, ap, b, bp, cc, cp, d, dp] = [i >> 7 & 1, i >> 6 & 1, i >> 5 & 1, i >> 4 & 1, i >> 3 & 1, i >> 2 & 1, i >> 1 & 1, i & 1];
        let (e_ab, e_apbp, e_cd, e_cpdp) = (eps(a, b), eps(ap, bp), eps(cc, d), eps(cp, dp));
        let mut v = xr(a, b, cc, d) * (e_apbp * e_cpdp);
        v += phi[bits(&[a, b, cp, dp])] * (e_apbp * e_cd);
        v += phi[bits(&[cc, d, ap, bp])] * (e_ab * e_cpdp);
        v += xr(ap, bp, cp, dp).conj() * (e_ab * e_cd);
        *out = v;
        minus[i] = psi[bits(&[a, b, cc, d])] * (e_apbp * e_cpdp);
        plus[i] = psi[bits(&[ap, bp, cp, dp])].conj() * (e_ab * e_cd);
    }
    let roles8 = rs.roles.clone();
    let var8 = rs.variance.clone();
    let back = |data: Vec<C64>| to_tensor(&TensorBlock::from_data(&[2; 8], &var8, &roles8, data), &[s]);
    let rebuilt = back(rebuilt)?;
    let reconstruction = rebuilt.data.iter().zip(&r.data).fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()));
    let split = SelfDualSplit {
        minus: back(minus)?,
        plus: back(plus)?,
    };
    let un = Role::Unprimed(s.block);
    let pr = Role::Primed(s.block);
    let spinors = CurvatureSpinors {
        psi: spinor_block(psi, [un; 4]),
        phi: spinor_block(phi, [un, un, pr, pr]),
        lambda: LAMBDA_SIGN * lam_raw.re,
        lambda_imag: lam_raw.im,
        x_structure,
        hermiticity,
        reconstruction,
    };
    Ok((spinors, split))
}

/// Lowered curvature `R_{abcd} = g_{aμ} R^μ_{bcd}` of a connection at its
/// base point.
pub fn lowered_curvature(conn: &Connection) -> Result<TensorBlock> {
    let r = crate::conformal::riemann_at(conn)?;
    Ok(lower_first(&r, &conn.geo.metric_values()))
}

/// Curvature spinors of the chosen connection on a 2+2 Lorentzian chart.
pub fn curvature_spinors_at(src: &dyn DMetricSource, kind: ConnectionKind, point: &[f64]) -> Result<(CurvatureSpinors, SelfDualSplit, Soldering)> {
    let s = build_soldering(src, point)?;
    let conn = connection_at(src, kind, point, 1)?;
    let (cs, split) = curvature_spinors(&lowered_curvature(&conn)?, &s)?;
    Ok((cs, split, s))
}

/// Lowered Weyl tensor of a connection, for comparison with the split.
pub fn weyl_lowered(conn: &Connection) -> Result<TensorBlock> {
    Ok(weyl_dtensor(&conn.package()?, &conn.geo.metric_values())?.weyl_lowered)
}

/// `max |ϖ² Ψ̂ − Ψ|` over dyad components. With `ε̂ = ϖ ε` the abstract
/// `Ψ_{ABCD}` is unchanged; the orthonormal dyad of `ϖ² g` is `ϖ^{-1/2}`
/// times that of `g`, which accounts for the factor `ϖ²`.
pub fn conformal_psi_residual(src: Arc<dyn DMetricSource>, factor: &ConformalFactor, kind: ConnectionKind, point: &[f64]) -> Result<f64> {
    let (cs, _, _) = curvature_spinors_at(src.as_ref(), kind, point)?;
    let w = factor.jet(point, 0)?.value();
    let r = Rescaled {
        inner: src,
        factor: factor.clone(),
    };
    let (hat, _, _) = curvature_spinors_at(&r, kind, point)?;
    Ok(cs
        .psi
        .data
        .iter()
        .zip(&hat.psi.data)
        .fold(0.0, |m, (a, b)| m.max((a - b * (w * w)).norm())))
}

/// Residuals of the spinor Bianchi identities
/// * `D^A_{B'} Ψ_{ABCD} − D^{A'}_{(B} Φ_{CD)A'B'}`,
/// * `D^{CA'} Φ_{CDA'B'} − 3 D_{DB'} Λ`,
///
/// The sign in front of `Λ` is the opposite of the familiar `(+,−,−,−)`
/// form: with this soldering, raising an index pair with `ε` is minus
/// raising the tensor index with `g`, and only the `Φ` term carries raised
/// pairs. The spinor derivatives are obtained from the tensor derivative of the
/// curvature through the (parallel) soldering. Needs jets of order 3.
pub fn spinor_bianchi_residual(src: &dyn DMetricSource, kind: ConnectionKind, point: &[f64]) -> Result<(f64, f64)> {
    let s = build_soldering(src, point)?;
    let conn = connection_at(src, kind, point, 2)?;
    spinor_bianchi_of(&conn, &s)
}

pub fn spinor_bianchi_of(conn: &Connection, s: &Soldering) -> Result<(f64, f64)> {
    let d = conn.dim();
    let dr = curvature_derivative(conn)?;
    let g = conn.geo.metric_values();
    // DL[e][a][b][c][d] = g_{aμ} (D_e R)^μ_{bcd}
    let mut dl = TensorBlock::total(d, &[Variance::Down; 5]);
    for idx in dl.indices() {
        let v = (0..d)
            .map(|mu| g[(idx[1], mu)] * dr[(((idx[0] * d + mu) * d + idx[2]) * d + idx[3]) * d + idx[4]])
            .sum();
        dl.set(&idx, v);
    }
    let sp = to_spinor(&dl, &[s])?;
    let (dx, dphi) = contract_pairs(&sp.data, 2);
    // index helpers: derivative pair (E, E') is the lead
    let lead = |e: usize, ep: usize| (e * 2 + ep) << 4;
    let mut dpsi = vec![ZERO; 64];
    let mut dlam = [[ZERO; 2]; 2];
    for e in 0..2 {
        for ep in 0..2 {
            let l = lead(e, ep);
            let sym = symmetrize4(&dx[l..l + 16]);
            dpsi[l..l + 16].copy_from_slice(&sym);
            dlam[e][ep] = x_trace(&dx[l..l + 16]) * (LAMBDA_SIGN / 6.0);
        }
    }
    let dpsi_at = |e: usize, ep: usize, a: usize, b: usize, cc: usize, dd: usize| dpsi[lead(e, ep) | bits(&[a, b, cc, dd])];
    // Φ_{CDA'B'} derivative: dphi[(E,E')][C][D][A'][B']
    let dphi_at = |e: usize, ep: usize, cc: usize, dd: usize, ap: usize, bp: usize| dphi[lead(e, ep) | bits(&[cc, dd, ap, bp])];
    let mut first: f64 = 0.0;
    for bp in 0..2 {
        for b in 0..2 {
            for cc in 0..2 {
                for dd in 0..2 {
                    let mut lhs = ZERO;
                    for a in 0..2 {
                        for f in 0..2 {
                            lhs += dpsi_at(f, bp, a, b, cc, dd) * eps(a, f);
                        }
                    }
                    let trip = [b, cc, dd];
                    let mut rhs = ZERO;
                    for p in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
                        let (x, y, z) = (trip[p[0]], trip[p[1]], trip[p[2]]);
                        for ap in 0..2 {
                            for fp in 0..2 {
                                rhs += dphi_at(x, fp, y, z, ap, bp) * eps(ap, fp);
                            }
                        }
                    }
                    first = first.max((lhs - rhs / 6.0).norm());
                }
            }
        }
    }
    let mut second: f64 = 0.0;
    for dd in 0..2 {
        for bp in 0..2 {
            let mut s2 = dlam[dd][bp] * -3.0;
            for cc in 0..2 {
                for f in 0..2 {
                    for ap in 0..2 {
                        for fp in 0..2 {
                            s2 += dphi_at(f, fp, cc, dd, ap, bp) * (eps(cc, f) * eps(ap, fp));
                        }
                    }
                }
            }
            second = second.max(s2.norm());
        }
    }
    Ok((first, second))
}

/// Blockwise curvature spinors of an 8-dimensional Sasaki-type scenario
/// with the Cartan connection: h-block from `R_{ijkh}`, v-block from
/// `S_{abcd}`, and the mixed `P_{ijka}` converted to
/// `X_{IJKA} = ¼ P ε^{I'J'} ε^{K'A'}` without further extraction.
#[derive(Clone, Debug)]
pub struct BlockSpinors {
    pub h: CurvatureSpinors,
    pub v: CurvatureSpinors,
    pub mixed: TensorBlock<C64>,
    pub h_solder: Soldering,
    pub v_solder: Soldering,
}

pub fn finsler_blockwise_spinors(src: &dyn DMetricSource, kind: ConnectionKind, point: &[f64]) -> Result<BlockSpinors> {
    let chart = src.chart();
    if chart.n != 4 || chart.m != 4 {
        return Err(Error::WrongDimension(format!(
            "blockwise spinors need n = m = 4, got {}+{}",
            chart.n, chart.m
        )));
    }
    let conn = connection_at(src, kind, point, 1)?;
    blockwise_of(&conn)
}

pub fn blockwise_of(conn: &Connection) -> Result<BlockSpinors> {
    let h_solder = block_soldering_geo(&conn.geo, Block::H)?;
    let v_solder = block_soldering_geo(&conn.geo, Block::V)?;
    let l = lowered_curvature(conn)?;
    let sub = |off: [usize; 4], roles: [Role; 4]| {
        let mut t = TensorBlock::zeros(&[4; 4], &[Variance::Down; 4], &roles);
        for idx in t.indices() {
            let v = l.get(&[idx[0] + off[0], idx[1] + off[1], idx[2] + off[2], idx[3] + off[3]]);
            t.set(&idx, v);
        }
        t
    };
    let rh = sub([0; 4], [Role::H; 4]);
    let rv = sub([4; 4], [Role::V; 4]);
    let (h, _) = curvature_spinors(&rh, &h_solder)?;
    let (v, _) = curvature_spinors(&rv, &v_solder)?;
    let pm = sub([0, 0, 0, 4], [Role::H, Role::H, Role::H, Role::V]);
    let ps = to_spinor(&pm, &[&h_solder, &v_solder])?;
    let (x, _) = contract_pairs(&ps.data, 0);
    let mixed = TensorBlock::from_data(
        &[2; 4],
        &[Variance::Down; 4],
        &[
            Role::Unprimed(Block::H),
            Role::Unprimed(Block::H),
            Role::Unprimed(Block::H),
            Role::Unprimed(Block::V),
        ],
        x,
    );
    Ok(BlockSpinors {
        h,
        v,
        mixed,
        h_solder,
        v_solder,
    })
}
