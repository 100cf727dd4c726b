//! d-connections as jet fields over the adapted frame, and everything built
//! from them: torsion, curvature, contractions, distortion, metric
//! compatibility and the Levi–Civita constraints.
//!
//! Conventions (total indices, h first):
//! * `D_{e_β} e_α = Γ^γ_{αβ} e_γ`, stored `[γ][α][β]`;
//! * `T^γ_{αβ} = Γ^γ_{αβ} − Γ^γ_{βα} + W^γ_{αβ}`, the components of `T(e_β, e_α)`;
//! * `R^τ_{αβγ} = [R(e_γ, e_β) e_α]^τ`, Ricci `R_{αβ} = R^τ_{αβτ}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finsler::SasakiLift;
use crate::geometry::{self, Adapted, DMetricJets, DMetricSource, NConnectionField};
use crate::jetmat;
use crate::jets::Jet;
use crate::tensor::{Role, TensorBlock, Variance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionKind {
    Canonical,
    Cartan,
    Berwald,
    Chern,
    LeviCivita,
    Custom,
}

impl ConnectionKind {
    pub fn name(self) -> &'static str {
        match self {
            ConnectionKind::Canonical => "canonical",
            ConnectionKind::Cartan => "cartan",
            ConnectionKind::Berwald => "berwald",
            ConnectionKind::Chern => "chern",
            ConnectionKind::LeviCivita => "levi_civita",
            ConnectionKind::Custom => "custom",
        }
    }

    /// Finsler-type connections need a Sasaki lift.
    pub fn needs_sasaki(self) -> bool {
        matches!(self, ConnectionKind::Cartan | ConnectionKind::Berwald | ConnectionKind::Chern)
    }
}

/// Coefficient jets of a connection in the adapted frame at one point.
#[derive(Clone, Debug)]
pub struct Connection {
    pub kind: ConnectionKind,
    pub geo: Adapted,
    pub gamma: Vec<Jet>,
}

fn at3(d: usize, c: usize, a: usize, b: usize) -> usize {
    (c * d + a) * d + b
}

fn at4(d: usize, t: usize, a: usize, b: usize, c: usize) -> usize {
    ((t * d + a) * d + b) * d + c
}

fn fill(v: Vec<Option<Jet>>, nv: usize) -> Vec<Jet> {
    let order = v.iter().flatten().map(Jet::order).min().unwrap_or(0);
    v.into_iter()
        .map(|j| j.map(|j| j.truncate(order)).unwrap_or_else(|| Jet::zero(nv, order)))
        .collect()
}

/// `e_α g_{pq}` for all α, p, q, indexed `[α][p][q]`.
fn metric_derivatives(geo: &Adapted) -> Vec<Jet> {
    let d = geo.dim();
    let mut out = Vec::with_capacity(d * d * d);
    for a in 0..d {
        for p in 0..d {
            for q in 0..d {
                out.push(geo.e(a, geo.g(p, q)));
            }
        }
    }
    out
}

/// `½ g^{cr}(e_k g_jr + e_j g_kr − e_r g_jk)` with `r` summed over the
/// block containing `c`.
fn christoffel_block(geo: &Adapted, dg: &[Jet], c: usize, block: &[usize], j: usize, k: usize) -> Jet {
    let d = geo.dim();
    let mut acc: Option<Jet> = None;
    for &r in block {
        let s = &(&dg[at3(d, k, j, r)] + &dg[at3(d, j, k, r)]) - &dg[at3(d, r, j, k)];
        let t = geo.ginv(c, r) * &s;
        acc = Some(match acc {
            None => t,
            Some(a) => a + t,
        });
    }
    acc.unwrap() * 0.5
}

impl Connection {
    /// The canonical d-connection of `(g, h, N)`; needs metric and N jets of
    /// order `q + 1` for coefficients of order `q`.
    pub fn canonical(j: &DMetricJets) -> Result<Connection> {
        let geo = Adapted::new(j)?;
        let (n, m, d) = (geo.n, geo.m, geo.dim());
        let nv = j.g[0].nvars();
        let dg = metric_derivatives(&geo);
        let mut gam: Vec<Option<Jet>> = vec![None; d * d * d];
        let hs: Vec<usize> = (0..n).collect();
        let vs: Vec<usize> = (n..d).collect();
        for i in 0..n {
            for jj in 0..n {
                for k in 0..n {
                    gam[at3(d, i, jj, k)] = Some(christoffel_block(&geo, &dg, i, &hs, jj, k));
                }
            }
        }
        // dn[k][b][a] = ∂_b N_k^a
        let dn = |k: usize, b: usize, a: usize| j.nc[k * m + a].partial(n + b);
        for a in 0..m {
            for b in 0..m {
                for k in 0..n {
                    // ∂_b N_k^a + ½ h^{ac}(e_k h_bc − h_dc ∂_b N_k^d − h_db ∂_c N_k^d)
                    let mut acc = dn(k, b, a);
                    for c in 0..m {
                        let mut s = dg[at3(d, k, n + b, n + c)].clone();
                        for dd in 0..m {
                            s -= geo.g(n + dd, n + c) * &dn(k, b, dd);
                            s -= geo.g(n + dd, n + b) * &dn(k, c, dd);
                        }
                        acc += &(geo.ginv(n + a, n + c) * &s * 0.5);
                    }
                    gam[at3(d, n + a, n + b, k)] = Some(acc);
                }
            }
        }
        for i in 0..n {
            for jj in 0..n {
                for c in 0..m {
                    // ½ g^{ik} e_c g_jk
                    let mut acc = geo.ginv(i, 0) * &dg[at3(d, n + c, jj, 0)];
                    for k in 1..n {
                        acc += geo.ginv(i, k) * &dg[at3(d, n + c, jj, k)];
                    }
                    gam[at3(d, i, jj, n + c)] = Some(acc * 0.5);
                }
            }
        }
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    gam[at3(d, n + a, n + b, n + c)] = Some(christoffel_block(&geo, &dg, n + a, &vs, n + b, n + c));
                }
            }
        }
        Ok(Connection {
            kind: ConnectionKind::Canonical,
            gamma: fill(gam, nv),
            geo,
        })
    }

    /// Levi–Civita connection expressed in the adapted frame (Koszul formula
    /// with the anholonomy terms).
    pub fn levi_civita(j: &DMetricJets) -> Result<Connection> {
        let geo = Adapted::new(j)?;
        let d = geo.dim();
        let nv = j.g[0].nvars();
        let dg = metric_derivatives(&geo);
        let mut lower: Vec<Jet> = Vec::with_capacity(d * d * d);
        for mu in 0..d {
            for a in 0..d {
                for b in 0..d {
                    let mut s = &(&dg[at3(d, b, a, mu)] + &dg[at3(d, a, b, mu)]) - &dg[at3(d, mu, a, b)];
                    for nu in 0..d {
                        s += geo.w(nu, b, a) * geo.g(nu, mu);
                        s -= geo.w(nu, b, mu) * geo.g(nu, a);
                        s -= geo.w(nu, a, mu) * geo.g(nu, b);
                    }
                    lower.push(s * 0.5);
                }
            }
        }
        let mut gam = Vec::with_capacity(d * d * d);
        for c in 0..d {
            for a in 0..d {
                for b in 0..d {
                    let mut acc = Jet::zero(nv, lower[0].order());
                    for mu in 0..d {
                        acc += geo.ginv(c, mu) * &lower[at3(d, mu, a, b)];
                    }
                    gam.push(acc);
                }
            }
        }
        Ok(Connection {
            kind: ConnectionKind::LeviCivita,
            gamma: gam,
            geo,
        })
    }

    /// Cartan, Berwald or Chern connection of a Sasaki-type d-metric
    /// (`h = g` under `a = n + i`).
    pub fn finsler(j: &DMetricJets, kind: ConnectionKind) -> Result<Connection> {
        if !kind.needs_sasaki() {
            return Err(Error::Validation(format!("{} is not a Finsler-type connection", kind.name())));
        }
        let diff = (j.g_values() - j.h_values()).amax();
        if j.n != j.m || diff > 1e-10 {
            return Err(Error::NotSasaki(diff));
        }
        let geo = Adapted::new(j)?;
        let (n, d) = (geo.n, geo.dim());
        let nv = j.g[0].nvars();
        let dg = metric_derivatives(&geo);
        let hs: Vec<usize> = (0..n).collect();
        let vs: Vec<usize> = (n..d).collect();
        let mut gam: Vec<Option<Jet>> = vec![None; d * d * d];
        for i in 0..n {
            for jj in 0..n {
                for k in 0..n {
                    let l = match kind {
                        ConnectionKind::Berwald => j.nc[jj * n + i].partial(n + k),
                        _ => christoffel_block(&geo, &dg, i, &hs, jj, k),
                    };
                    gam[at3(d, n + i, n + jj, k)] = Some(l.clone());
                    gam[at3(d, i, jj, k)] = Some(l);
                }
            }
        }
        if kind == ConnectionKind::Cartan {
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        let cc = christoffel_block(&geo, &dg, n + a, &vs, n + b, n + c);
                        gam[at3(d, a, b, n + c)] = Some(cc.clone());
                        gam[at3(d, n + a, n + b, n + c)] = Some(cc);
                    }
                }
            }
        }
        Ok(Connection {
            kind,
            gamma: fill(gam, nv),
            geo,
        })
    }

    pub fn dim(&self) -> usize {
        self.geo.dim()
    }

    pub fn order(&self) -> usize {
        jetmat::min_order(&self.gamma)
    }

    pub fn gamma(&self, c: usize, a: usize, b: usize) -> &Jet {
        &self.gamma[at3(self.dim(), c, a, b)]
    }

    pub fn gamma_block(&self) -> TensorBlock {
        let d = self.dim();
        TensorBlock::from_data(
            &[d, d, d],
            &[Variance::Up, Variance::Down, Variance::Down],
            &[Role::Total; 3],
            self.gamma.iter().map(Jet::value).collect(),
        )
    }

    /// The four coefficient families at the base point.
    pub fn coeffs(&self) -> DConnectionCoeffs {
        let (n, m) = (self.geo.n, self.geo.m);
        let g = |c: usize, a: usize, b: usize| self.gamma(c, a, b).value();
        let mk = |dims: [usize; 3], roles: [Role; 3], off: [usize; 3]| {
            let mut t = TensorBlock::zeros(&dims, &[Variance::Up, Variance::Down, Variance::Down], &roles);
            for idx in t.indices() {
                t.set(&idx, g(idx[0] + off[0], idx[1] + off[1], idx[2] + off[2]));
            }
            t
        };
        DConnectionCoeffs {
            kind: self.kind,
            l_h: mk([n, n, n], [Role::H, Role::H, Role::H], [0, 0, 0]),
            l_v: mk([m, m, n], [Role::V, Role::V, Role::H], [n, n, 0]),
            c_h: mk([n, n, m], [Role::H, Role::H, Role::V], [0, 0, n]),
            c_v: mk([m, m, m], [Role::V, Role::V, Role::V], [n, n, n]),
        }
    }

    /// Torsion jets `T^γ_{αβ}`.
    /// Needs the N-connection to first order for the anholonomy term.
    pub fn torsion(&self) -> Result<Vec<Jet>> {
        let d = self.dim();
        if self.geo.w.len() != d * d * d {
            return Err(Error::OrderUnsupported { requested: 1, max: 0 });
        }
        let mut out = Vec::with_capacity(d * d * d);
        for c in 0..d {
            for a in 0..d {
                for b in 0..d {
                    out.push(&(self.gamma(c, a, b) - self.gamma(c, b, a)) + self.geo.w(c, a, b));
                }
            }
        }
        Ok(out)
    }

    /// Curvature jets `R^τ_{αβγ}`, one order below the connection.
    pub fn curvature(&self) -> Result<Vec<Jet>> {
        let d = self.dim();
        if self.order() == 0 {
            return Err(Error::OrderUnsupported { requested: 1, max: 0 });
        }
        // eg[γ][τ][α][β] = e_γ Γ^τ_{αβ}
        let eg: Vec<Jet> = (0..d)
            .flat_map(|c| self.gamma.iter().map(move |g| (c, g)))
            .map(|(c, g)| self.geo.e(c, g))
            .collect();
        let mut out = Vec::with_capacity(d * d * d * d);
        for t in 0..d {
            for a in 0..d {
                for b in 0..d {
                    for c in 0..d {
                        let mut r = &eg[at4(d, c, t, a, b)] - &eg[at4(d, b, t, a, c)];
                        for mu in 0..d {
                            r += self.gamma(mu, a, b) * self.gamma(t, mu, c);
                            r -= self.gamma(mu, a, c) * self.gamma(t, mu, b);
                            r -= self.geo.w(mu, c, b) * self.gamma(t, a, mu);
                        }
                        out.push(r);
                    }
                }
            }
        }
        Ok(out)
    }

    /// `D_γ g_{αβ}` as jets indexed `[γ][α][β]`.
    pub fn metric_derivative(&self) -> Vec<Jet> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d * d);
        for c in 0..d {
            for a in 0..d {
                for b in 0..d {
                    let mut s = self.geo.e(c, self.geo.g(a, b));
                    for mu in 0..d {
                        s -= self.gamma(mu, a, c) * self.geo.g(mu, b);
                        s -= self.gamma(mu, b, c) * self.geo.g(a, mu);
                    }
                    out.push(s);
                }
            }
        }
        out
    }

    /// `max |D_γ g_{αβ}|` at the base point.
    pub fn nonmetricity(&self) -> f64 {
        self.metric_derivative().iter().fold(0.0, |m, j| m.max(j.value().abs()))
    }

    /// First covariant derivative of a vector field given by frame
    /// components: `[τ][β] = D_β V^τ`.
    pub fn covariant_vector(&self, v: &[Jet]) -> Vec<Jet> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for t in 0..d {
            for b in 0..d {
                let mut s = self.geo.e(b, &v[t]);
                for mu in 0..d {
                    s += self.gamma(t, mu, b) * &v[mu];
                }
                out.push(s);
            }
        }
        out
    }

    /// Max over components of
    /// `Δ_{αβ}V^τ − T^γ_{αβ} D_γ V^τ − R^τ_{μβα} V^μ`, where `Δ_{αβ}` is the
    /// antisymmetrized tensorial second derivative. `v` needs order ≥ 2 and
    /// the connection order ≥ 1.
    pub fn commutator_residual(&self, v: &[Jet]) -> Result<f64> {
        let d = self.dim();
        let r = self.curvature()?;
        let t = self.torsion()?;
        let dv = self.covariant_vector(v);
        // ddv[τ][β][α] = D_α D_β V^τ
        let mut ddv = Vec::with_capacity(d * d * d);
        for tau in 0..d {
            for b in 0..d {
                for a in 0..d {
                    let mut s = self.geo.e(a, &dv[tau * d + b]);
                    for mu in 0..d {
                        s += self.gamma(tau, mu, a) * &dv[mu * d + b];
                        s -= self.gamma(mu, b, a) * &dv[tau * d + mu];
                    }
                    ddv.push(s.value());
                }
            }
        }
        let mut worst: f64 = 0.0;
        for tau in 0..d {
            for a in 0..d {
                for b in 0..d {
                    let mut s = ddv[at3(d, tau, b, a)] - ddv[at3(d, tau, a, b)];
                    for g in 0..d {
                        s -= t[at3(d, g, a, b)].value() * dv[tau * d + g].value();
                    }
                    for mu in 0..d {
                        s -= r[at4(d, tau, mu, b, a)].value() * v[mu].value();
                    }
                    worst = worst.max(s.abs());
                }
            }
        }
        Ok(worst)
    }
}

/// Connection of the requested kind at `point`, with coefficient jets of
/// order `q`.
pub fn connection_at(src: &dyn DMetricSource, kind: ConnectionKind, point: &[f64], q: usize) -> Result<Connection> {
    let j = jets_for(src, kind, point, q)?;
    match kind {
        ConnectionKind::Canonical => Connection::canonical(&j),
        ConnectionKind::LeviCivita => Connection::levi_civita(&j),
        ConnectionKind::Cartan | ConnectionKind::Berwald | ConnectionKind::Chern => Connection::finsler(&j, kind),
        ConnectionKind::Custom => Err(Error::Validation("custom connections are supplied by the caller".into())),
    }
}

fn jets_for(src: &dyn DMetricSource, kind: ConnectionKind, point: &[f64], q: usize) -> Result<DMetricJets> {
    match kind {
        ConnectionKind::Cartan | ConnectionKind::Chern => src.jets_split(point, q + 1, q),
        _ => src.jets_split(point, q + 1, q + 1),
    }
}

/// Cartan-family connection of a Sasaki lift.
pub fn cartan_dconnection(lift: &SasakiLift, point: &[f64], kind: ConnectionKind) -> Result<DConnectionCoeffs> {
    Ok(connection_at(lift, kind, point, 0)?.coeffs())
}

pub fn canonical_dconnection(src: &dyn DMetricSource, point: &[f64]) -> Result<DConnectionCoeffs> {
    Ok(connection_at(src, ConnectionKind::Canonical, point, 0)?.coeffs())
}

/// Coefficient families `(L^i_jk, L^a_bk, C^i_jc, C^a_bc)`, each stored
/// upper index first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DConnectionCoeffs {
    pub kind: ConnectionKind,
    pub l_h: TensorBlock,
    pub l_v: TensorBlock,
    pub c_h: TensorBlock,
    pub c_v: TensorBlock,
}

/// Coordinate Christoffel symbols `Γ^c_{ab}` from jets of a coordinate
/// metric (row-major, order ≥ 1).
pub fn christoffel_jets(g: &[Jet], dim: usize) -> Result<Vec<Jet>> {
    let ginv = jetmat::inverse(g, dim)?;
    let dg: Vec<Jet> = (0..dim).flat_map(|k| g.iter().map(move |x| x.partial(k))).collect();
    let at = |k: usize, a: usize, b: usize| &dg[k * dim * dim + a * dim + b];
    let mut out = Vec::with_capacity(dim * dim * dim);
    for c in 0..dim {
        for a in 0..dim {
            for b in 0..dim {
                let mut acc: Option<Jet> = None;
                for r in 0..dim {
                    let s = &(at(a, r, b) + at(b, r, a)) - at(r, a, b);
                    let t = &ginv[c * dim + r] * &s;
                    acc = Some(match acc {
                        None => t,
                        Some(x) => x + t,
                    });
                }
                out.push(acc.unwrap() * 0.5);
            }
        }
    }
    Ok(out)
}

/// Christoffel symbols of the assembled coordinate metric at `point`.
pub fn levi_civita(src: &dyn DMetricSource, point: &[f64]) -> Result<TensorBlock> {
    let j = src.jets(point, 1)?;
    let d = j.n + j.m;
    let gam = christoffel_jets(&geometry::assemble_jets(&j), d)?;
    Ok(TensorBlock::from_data(
        &[d, d, d],
        &[Variance::Up, Variance::Down, Variance::Down],
        &[Role::Total; 3],
        gam.iter().map(Jet::value).collect(),
    ))
}

/// Coordinate Christoffels carried to the adapted frame:
/// `θ^γ_c̄ (e_β(e_α^c̄) + e_α^ā e_β^b̄ Γ^c̄_{āb̄})`. Needs metric and N jets of
/// order `q + 1`.
pub fn adapted_from_coordinate(j: &DMetricJets) -> Result<Vec<Jet>> {
    let (n, m) = (j.n, j.m);
    let d = n + m;
    let nv = j.g[0].nvars();
    let gam = christoffel_jets(&geometry::assemble_jets(j), d)?;
    let order = jetmat::min_order(&gam).min(j.nconn_order().saturating_sub(1));
    // frame[α][ā] and coframe[γ][c̄] as jets
    let mut frame = vec![Jet::zero(nv, order + 1); d * d];
    let mut coframe = vec![Jet::zero(nv, order + 1); d * d];
    for a in 0..d {
        frame[a * d + a] = Jet::constant(nv, order + 1, 1.0);
        coframe[a * d + a] = Jet::constant(nv, order + 1, 1.0);
    }
    for i in 0..n {
        for b in 0..m {
            frame[i * d + n + b] = -&j.nc[i * m + b];
            coframe[(n + b) * d + i] = j.nc[i * m + b].clone();
        }
    }
    let mut out = Vec::with_capacity(d * d * d);
    for c in 0..d {
        for a in 0..d {
            for b in 0..d {
                let mut acc = Jet::zero(nv, order);
                for cb in 0..d {
                    let mut inner = geometry::elongated(n, m, &j.nc, b, &frame[a * d + cb]);
                    for ab in 0..d {
                        for bb in 0..d {
                            let f = &frame[a * d + ab] * &frame[b * d + bb];
                            inner += &f * &gam[(cb * d + ab) * d + bb];
                        }
                    }
                    acc += &coframe[c * d + cb] * &inner;
                }
                out.push(acc);
            }
        }
    }
    Ok(out)
}

/// Distortion `Q = D − ∇` in the adapted frame, with `∇` obtained from the
/// coordinate Christoffels.
pub fn distortion(conn: &Connection, j: &DMetricJets) -> Result<Vec<Jet>> {
    let lc = adapted_from_coordinate(j)?;
    Ok(conn.gamma.iter().zip(&lc).map(|(a, b)| a - b).collect())
}

/// `max |R(D) − R(∇) − (∇_γ Q^τ_{αβ} − ∇_β Q^τ_{αγ} + Q^τ_{μγ}Q^μ_{αβ} − Q^τ_{μβ}Q^μ_{αγ})|`
/// with both curvatures computed independently. Both connections must
/// share the same adapted data and have order ≥ 1.
pub fn distortion_curvature_residual(d_conn: &Connection, lc: &Connection) -> Result<f64> {
    let d = d_conn.dim();
    let rd = d_conn.curvature()?;
    let rl = lc.curvature()?;
    let q: Vec<Jet> = d_conn.gamma.iter().zip(&lc.gamma).map(|(a, b)| a - b).collect();
    let qv = |t: usize, a: usize, b: usize| q[at3(d, t, a, b)].value();
    let g = |t: usize, a: usize, b: usize| lc.gamma(t, a, b).value();
    // (∇_γ Q)^τ_{αβ}
    let nq = |c: usize, t: usize, a: usize, b: usize| {
        let mut s = lc.geo.e(c, &q[at3(d, t, a, b)]).value();
        for mu in 0..d {
            s += g(t, mu, c) * qv(mu, a, b) - g(mu, a, c) * qv(t, mu, b) - g(mu, b, c) * qv(t, a, mu);
        }
        s
    };
    let mut worst: f64 = 0.0;
    for t in 0..d {
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    let mut rhs = nq(c, t, a, b) - nq(b, t, a, c);
                    for mu in 0..d {
                        rhs += qv(t, mu, c) * qv(mu, a, b) - qv(t, mu, b) * qv(mu, a, c);
                    }
                    let lhs = rd[at4(d, t, a, b, c)].value() - rl[at4(d, t, a, b, c)].value();
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// The named d-torsion families at the base point:
/// `T^i_ja = C^i_ja`, `T^a_ji = Ω^a_ji`, `T^a_bi = ∂_b N_i^a − L^a_bi`, the
/// purely horizontal and vertical families zero, and antisymmetric partners
/// filled in. The `T^a_bi` family has the opposite sign to
/// [`Connection::torsion`].
pub fn dtorsion(coeffs: &DConnectionCoeffs, nconn: &NConnectionField, point: &[f64]) -> Result<TensorBlock> {
    let (n, m) = (nconn.n, nconn.m);
    let d = n + m;
    let (w, _) = geometry::anholonomy(nconn, point)?;
    let mut t = TensorBlock::total(d, &[Variance::Up, Variance::Down, Variance::Down]);
    for i in 0..n {
        for jj in 0..n {
            for a in 0..m {
                let c = coeffs.c_h.get(&[i, jj, a]);
                t.set(&[i, jj, n + a], c);
                t.set(&[i, n + a, jj], -c);
            }
        }
    }
    for a in 0..m {
        for i in 0..n {
            for jj in 0..n {
                t.set(&[n + a, jj, i], w.get(&[n + a, jj, i]));
            }
        }
        for b in 0..m {
            for i in 0..n {
                let v = w.get(&[n + a, i, n + b]) - coeffs.l_v.get(&[a, b, i]);
                t.set(&[n + a, n + b, i], v);
                t.set(&[n + a, i, n + b], -v);
            }
        }
    }
    Ok(t)
}

/// Residuals `(max |L^c_aj − e_a N_j^c|, max |C^i_jb|, max |Ω^a_ij|)`.
pub fn lc_constraint_residual(conn: &Connection) -> (f64, f64, f64) {
    let (n, m) = (conn.geo.n, conn.geo.m);
    let mut l: f64 = 0.0;
    let mut c: f64 = 0.0;
    let mut om: f64 = 0.0;
    for cc in 0..m {
        for a in 0..m {
            for jj in 0..n {
                let en = conn.geo.nc[jj * m + cc].partial(n + a).value();
                l = l.max((conn.gamma(n + cc, n + a, jj).value() - en).abs());
            }
        }
    }
    for i in 0..n {
        for jj in 0..n {
            for b in 0..m {
                c = c.max(conn.gamma(i, jj, n + b).value().abs());
            }
        }
    }
    for a in 0..m {
        for i in 0..n {
            for jj in 0..n {
                om = om.max(conn.geo.w(n + a, i, jj).value().abs());
            }
        }
    }
    (l, c, om)
}

/// Curvature, torsion and their contractions at one point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvaturePackage {
    pub riemann: TensorBlock,
    pub torsion: TensorBlock,
    pub ricci: TensorBlock,
    pub scalar: f64,
    pub einstein: TensorBlock,
    pub lambda_spinor: f64,
    pub phi: TensorBlock,
}

pub fn contractions(riemann: &TensorBlock, torsion: &TensorBlock, metric: &DMatrix<f64>) -> Result<CurvaturePackage> {
    let d = metric.nrows();
    let ginv = metric
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularMetric("metric not invertible".into()))?;
    let dd = [Variance::Down, Variance::Down];
    let mut ricci = TensorBlock::total(d, &dd);
    for a in 0..d {
        for b in 0..d {
            ricci.set(&[a, b], (0..d).map(|t| riemann.get(&[t, a, b, t])).sum());
        }
    }
    let mut scalar = 0.0;
    for a in 0..d {
        for b in 0..d {
            scalar += ginv[(a, b)] * ricci.get(&[a, b]);
        }
    }
    let lambda = scalar / 24.0;
    let mut einstein = TensorBlock::total(d, &dd);
    let mut phi = TensorBlock::total(d, &dd);
    for a in 0..d {
        for b in 0..d {
            einstein.set(&[a, b], ricci.get(&[a, b]) - 0.5 * metric[(a, b)] * scalar);
            phi.set(&[a, b], 3.0 * lambda * metric[(a, b)] - 0.5 * ricci.get(&[a, b]));
        }
    }
    Ok(CurvaturePackage {
        riemann: riemann.clone(),
        torsion: torsion.clone(),
        ricci,
        scalar,
        einstein,
        lambda_spinor: lambda,
        phi,
    })
}

pub fn riemann_block(r: &[Jet], d: usize) -> TensorBlock {
    TensorBlock::from_data(
        &[d, d, d, d],
        &[Variance::Up, Variance::Down, Variance::Down, Variance::Down],
        &[Role::Total; 4],
        r.iter().map(Jet::value).collect(),
    )
}

pub fn torsion_block(t: &[Jet], d: usize) -> TensorBlock {
    TensorBlock::from_data(
        &[d, d, d],
        &[Variance::Up, Variance::Down, Variance::Down],
        &[Role::Total; 3],
        t.iter().map(Jet::value).collect(),
    )
}

impl Connection {
    /// Curvature package at the base point (connection order ≥ 1).
    pub fn package(&self) -> Result<CurvaturePackage> {
        let d = self.dim();
        let r = self.curvature()?;
        contractions(&riemann_block(&r, d), &torsion_block(&self.torsion()?, d), &self.geo.metric_values())
    }
}

/// Curvature package of the given connection kind at `point`.
pub fn curvature_package(src: &dyn DMetricSource, kind: ConnectionKind, point: &[f64]) -> Result<CurvaturePackage> {
    connection_at(src, kind, point, 1)?.package()
}
