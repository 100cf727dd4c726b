//! Reference computations that share nothing with the library beyond metric
//! evaluation: finite-difference Christoffel and Riemann tensors, an LDLᵀ
//! congruence factorization, vector holonomy around small loops, and the
//! Petrov invariants of a Weyl spinor.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use nonholo::connections::{connection_at, ConnectionKind};
use nonholo::geometry::{assemble_matrix, sample};
use nonholo::{DMetricSource, TensorBlock};

pub fn metric(src: &dyn DMetricSource, p: &[f64]) -> DMatrix<f64> {
    assemble_matrix(&sample(src, p).unwrap())
}

fn shifted(p: &[f64], k: usize, h: f64) -> Vec<f64> {
    let mut q = p.to_vec();
    q[k] += h;
    q
}

/// Fourth-order central difference of a matrix-valued map along coordinate k.
fn d_matrix(f: &dyn Fn(&[f64]) -> DMatrix<f64>, p: &[f64], k: usize, h: f64) -> DMatrix<f64> {
    (f(&shifted(p, k, -2.0 * h)) - f(&shifted(p, k, 2.0 * h)) + (f(&shifted(p, k, h)) - f(&shifted(p, k, -h))) * 8.0) / (12.0 * h)
}

/// Christoffel symbols `Γ^a_{bc}` (at `a*d*d + b*d + c`) of a d×d metric
/// depending on the first d coordinates of `p`.
pub fn fd_christoffel_of(f: &dyn Fn(&[f64]) -> DMatrix<f64>, p: &[f64], h: f64) -> Vec<f64> {
    let g = f(p);
    let d = g.nrows();
    let gi = g.try_inverse().unwrap();
    let dg: Vec<DMatrix<f64>> = (0..d).map(|k| d_matrix(f, p, k, h)).collect();
    let mut out = vec![0.0; d * d * d];
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                out[(a * d + b) * d + c] = (0..d).map(|e| 0.5 * gi[(a, e)] * (dg[b][(e, c)] + dg[c][(e, b)] - dg[e][(b, c)])).sum();
            }
        }
    }
    out
}

pub fn fd_christoffel(src: &dyn DMetricSource, p: &[f64], h: f64) -> Vec<f64> {
    fd_christoffel_of(&|q: &[f64]| metric(src, q), p, h)
}

/// Coordinate Riemann tensor `R^ρ_{σμν}` with `R(∂_μ, ∂_ν)∂_σ = R^ρ_{σμν}∂_ρ`.
pub fn fd_riemann(src: &dyn DMetricSource, p: &[f64]) -> Vec<f64> {
    let d = p.len();
    let gam = fd_christoffel(src, p, 1e-4);
    let h = 1e-3;
    let dgam: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let at = |s: f64| fd_christoffel(src, &shifted(p, k, s * h), 1e-4);
            let (m2, m1, p1, p2) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
            (0..d * d * d).map(|i| (m2[i] - p2[i] + 8.0 * (p1[i] - m1[i])) / (12.0 * h)).collect()
        })
        .collect();
    let g3 = |a: usize, b: usize, c: usize| gam[(a * d + b) * d + c];
    let mut out = vec![0.0; d * d * d * d];
    for r in 0..d {
        for s in 0..d {
            for mu in 0..d {
                for nu in 0..d {
                    let mut v = dgam[mu][(r * d + nu) * d + s] - dgam[nu][(r * d + mu) * d + s];
                    for l in 0..d {
                        v += g3(r, mu, l) * g3(l, nu, s) - g3(r, nu, l) * g3(l, mu, s);
                    }
                    out[((r * d + s) * d + mu) * d + nu] = v;
                }
            }
        }
    }
    out
}

/// Max deviation of the library Levi-Civita symbols from the FD oracle on an
/// N = 0 chart, where adapted and coordinate frames coincide.
pub fn christoffel_deviation(src: &dyn DMetricSource, p: &[f64]) -> f64 {
    let c = connection_at(src, ConnectionKind::LeviCivita, p, 0).unwrap();
    let fd = fd_christoffel(src, p, 1e-3);
    let d = p.len();
    let mut w: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            for g in 0..d {
                w = w.max((c.gamma(a, b, g).value() - fd[(a * d + b) * d + g]).abs());
            }
        }
    }
    w
}

/// Max deviation of the library curvature from the FD oracle on an N = 0
/// chart. The library stores `R^τ_{αβγ} = [R(e_γ, e_β) e_α]^τ`.
pub fn riemann_deviation(src: &dyn DMetricSource, p: &[f64]) -> f64 {
    let r = connection_at(src, ConnectionKind::LeviCivita, p, 1).unwrap().curvature().unwrap();
    let fd = fd_riemann(src, p);
    let d = p.len();
    let mut w: f64 = 0.0;
    for t in 0..d {
        for a in 0..d {
            for b in 0..d {
                for g in 0..d {
                    w = w.max((r[((t * d + a) * d + b) * d + g].value() - fd[((t * d + a) * d + g) * d + b]).abs());
                }
            }
        }
    }
    w
}

/// Scalar curvature from the coordinate FD Riemann tensor.
pub fn fd_scalar_curvature(src: &dyn DMetricSource, p: &[f64]) -> f64 {
    let fd = fd_riemann(src, p);
    let gi = metric(src, p).try_inverse().unwrap();
    let d = p.len();
    let mut sr = 0.0;
    for s in 0..d {
        for nu in 0..d {
            let ric: f64 = (0..d).map(|r| fd[((r * d + s) * d + r) * d + nu]).sum();
            sr += gi[(s, nu)] * ric;
        }
    }
    sr
}

/// `A = L D Lᵀ` without pivoting; returns `P = L|D|^{1/2}` and `sign(D)`.
pub fn ldl_congruence(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::identity(n, n);
    let mut dv = vec![0.0; n];
    for j in 0..n {
        dv[j] = a[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)] * dv[k]).sum::<f64>();
        for i in j + 1..n {
            l[(i, j)] = (a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)] * dv[k]).sum::<f64>()) / dv[j];
        }
    }
    let mut p = l;
    for j in 0..n {
        let s = dv[j].abs().sqrt();
        for i in 0..n {
            p[(i, j)] *= s;
        }
    }
    (p, dv.iter().map(|x| x.signum()).collect())
}

/// Solution of `eᵀ F e = G` from two LDLᵀ factorizations.
pub fn oracle_vierbein(g: &DMatrix<f64>, f: &DMatrix<f64>) -> DMatrix<f64> {
    let (pg, jg) = ldl_congruence(g);
    let (pf, jf) = ldl_congruence(f);
    let n = g.nrows();
    // match each G pivot sign to an unused F pivot of the same sign
    let mut used = vec![false; n];
    let mut perm = DMatrix::<f64>::zeros(n, n);
    for (i, sg) in jg.iter().enumerate() {
        let k = (0..n).find(|&k| !used[k] && jf[k] == *sg).expect("same inertia");
        used[k] = true;
        perm[(k, i)] = 1.0;
    }
    // F = Pf Jf Pfᵀ, G = Pg Jg Pgᵀ, Jg = Πᵀ Jf Π  ⇒  e = Pf⁻ᵀ Π Pgᵀ
    pf.transpose().try_inverse().unwrap() * perm * pg.transpose()
}

/// Random symmetric 4×4 matrix `Q diag(±1) Qᵀ` with `neg` negative entries.
pub fn random_symmetric(rng: &mut nonholo::scenario::Lcg, neg: usize) -> DMatrix<f64> {
    let n = 4;
    let q = DMatrix::from_fn(n, n, |_, _| 2.0 * rng.next_f64() - 1.0) + DMatrix::identity(n, n) * 2.0;
    let mut d = DMatrix::identity(n, n);
    for i in 0..neg {
        d[(n - 1 - i, n - 1 - i)] = -1.0;
    }
    &q * d * q.transpose()
}

/// Coordinate parallel transport of `v0` around the loop
/// x → x+εt → x+εt+εu → x+εu → x with RK4 and FD Christoffels.
fn loop_transport(src: &dyn DMetricSource, x: &[f64], t: &[f64], u: &[f64], eps: f64, steps: usize, v0: &[f64]) -> Vec<f64> {
    let d = x.len();
    let rhs = |p: &[f64], dir: &[f64], v: &[f64]| -> Vec<f64> {
        let gam = fd_christoffel(src, p, 1e-3);
        (0..d)
            .map(|a| {
                -(0..d)
                    .flat_map(|b| (0..d).map(move |c| (b, c)))
                    .map(|(b, c)| gam[(a * d + b) * d + c] * dir[b] * v[c])
                    .sum::<f64>()
            })
            .collect()
    };
    let mut v = v0.to_vec();
    let mut start = x.to_vec();
    for (dir, sign) in [(t, 1.0), (u, 1.0), (t, -1.0), (u, -1.0)] {
        let step: Vec<f64> = dir.iter().map(|z| sign * eps * z).collect();
        let h = 1.0 / steps as f64;
        for i in 0..steps {
            let at = |s: f64| -> Vec<f64> { start.iter().zip(&step).map(|(a, b)| a + (i as f64 + s) * h * b).collect() };
            let add = |v: &[f64], k: &[f64], c: f64| -> Vec<f64> { v.iter().zip(k).map(|(a, b)| a + c * h * b).collect() };
            let k1 = rhs(&at(0.0), &step, &v);
            let k2 = rhs(&at(0.5), &step, &add(&v, &k1, 0.5));
            let k3 = rhs(&at(0.5), &step, &add(&v, &k2, 0.5));
            let k4 = rhs(&at(1.0), &step, &add(&v, &k3, 1.0));
            v = (0..d).map(|a| v[a] + h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a])).collect();
        }
        start = start.iter().zip(&step).map(|(a, b)| a + b).collect();
    }
    v
}

/// Holonomy defect of a small loop centred on `p` against `−R(t,u)v` on an
/// N = 0 chart. Returns `(error, |R(t,u)v|)`.
pub fn loop_holonomy_deviation(src: &dyn DMetricSource, p: &[f64], t: &[f64], u: &[f64], v0: &[f64]) -> (f64, f64) {
    let d = p.len();
    // the defect over ε² still carries O(ε) and O(ε²) terms
    let defect = |eps: f64| -> Vec<f64> {
        let x: Vec<f64> = (0..d).map(|a| p[a] - 0.5 * eps * (t[a] + u[a])).collect();
        loop_transport(src, &x, t, u, eps, 8, v0)
            .iter()
            .zip(v0)
            .map(|(a, b)| (a - b) / (eps * eps))
            .collect()
    };
    let (a, b, c) = (defect(0.04), defect(0.02), defect(0.01));
    let rich: Vec<f64> = (0..d).map(|k| (8.0 * c[k] - 6.0 * b[k] + a[k]) / 3.0).collect();
    let r = connection_at(src, ConnectionKind::LeviCivita, p, 1).unwrap().curvature().unwrap();
    let mut ruv = vec![0.0; d];
    for tau in 0..d {
        for al in 0..d {
            for be in 0..d {
                for ga in 0..d {
                    ruv[tau] += r[((tau * d + al) * d + be) * d + ga].value() * v0[al] * u[be] * t[ga];
                }
            }
        }
    }
    let err = (0..d).map(|k| (rich[k] + ruv[k]).abs()).fold(0.0, f64::max);
    (err, ruv.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

/// `I = Ψ_{AB}{}^{CD} Ψ_{CD}{}^{AB}` and `J = Ψ_{AB}{}^{CD} Ψ_{CD}{}^{EF} Ψ_{EF}{}^{AB}`.
pub fn weyl_spinor_invariants(psi: &TensorBlock<C64>) -> (C64, C64) {
    // ε^{AB} with ε^{01} = 1
    let eps = |a: usize, b: usize| -> f64 {
        match (a, b) {
            (0, 1) => 1.0,
            (1, 0) => -1.0,
            _ => 0.0,
        }
    };
    let mixed = |a: usize, b: usize, c: usize, d: usize| -> C64 {
        let mut z = C64::new(0.0, 0.0);
        for e in 0..2 {
            for f in 0..2 {
                z += psi.get(&[a, b, e, f]) * eps(c, e) * eps(d, f);
            }
        }
        z
    };
    let mut i_inv = C64::new(0.0, 0.0);
    let mut j_inv = C64::new(0.0, 0.0);
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    i_inv += mixed(a, b, c, d) * mixed(c, d, a, b);
                    for e in 0..2 {
                        for f in 0..2 {
                            j_inv += mixed(a, b, c, d) * mixed(c, d, e, f) * mixed(e, f, a, b);
                        }
                    }
                }
            }
        }
    }
    (i_inv, j_inv)
}
