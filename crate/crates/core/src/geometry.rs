//! N-connections, adapted frames, anholonomy and the block form of the metric.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::{eval_jet, ScalarField};
use crate::jetmat;
use crate::jets::{Jet, MAX_ORDER};
use crate::tensor::{Role, TensorBlock, Variance};

#[derive(Clone, Debug, PartialEq)]
pub struct ChartSpec {
    pub n: usize,
    pub m: usize,
    pub signature: Vec<i32>,
}

impl ChartSpec {
    pub fn new(n: usize, m: usize, signature: Vec<i32>) -> Result<ChartSpec> {
        if n != m || !(n == 2 || n == 4) {
            return Err(Error::Validation(format!("chart must have n = m in {{2, 4}}, got {n}+{m}")));
        }
        if signature.len() != n + m || signature.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Validation(format!("signature must be {} entries of +1/-1", n + m)));
        }
        Ok(ChartSpec { n, m, signature })
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    /// Number of negative entries in the declared signature of each block.
    pub fn negatives(&self) -> (usize, usize) {
        let h = self.signature[..self.n].iter().filter(|&&s| s < 0).count();
        let v = self.signature[self.n..].iter().filter(|&&s| s < 0).count();
        (h, v)
    }
}

/// Coefficients `N_i^a(u)`, stored row-major as `coeffs[i * m + a]`.
#[derive(Clone, Debug)]
pub struct NConnectionField {
    pub n: usize,
    pub m: usize,
    pub coeffs: Vec<ScalarField>,
}

impl NConnectionField {
    pub fn zero(n: usize, m: usize) -> NConnectionField {
        NConnectionField {
            n,
            m,
            coeffs: (0..n * m).map(|_| ScalarField::constant(n + m, 0.0)).collect(),
        }
    }

    pub fn new(n: usize, m: usize, coeffs: Vec<ScalarField>) -> Result<NConnectionField> {
        if coeffs.len() != n * m {
            return Err(Error::Validation(format!("N needs {} coefficients, got {}", n * m, coeffs.len())));
        }
        check_arity(&coeffs, n + m)?;
        Ok(NConnectionField { n, m, coeffs })
    }

    pub fn jets(&self, point: &[f64], order: usize) -> Result<Vec<Jet>> {
        self.coeffs.iter().map(|f| eval_jet(f, point, order)).collect()
    }

    pub fn values(&self, point: &[f64]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.n, self.m);
        for i in 0..self.n {
            for a in 0..self.m {
                out[(i, a)] = self.coeffs[i * self.m + a].eval(point)?;
            }
        }
        Ok(out)
    }
}

fn check_arity(fields: &[ScalarField], arity: usize) -> Result<()> {
    for f in fields {
        if f.arity() != arity {
            return Err(Error::ArityMismatch {
                expected: arity,
                got: f.arity(),
            });
        }
    }
    Ok(())
}

/// Block metric `g_ij ⊕ h_ab` against the N-elongated coframe, plus `N`.
#[derive(Clone, Debug)]
pub struct DMetricField {
    pub chart: ChartSpec,
    /// Row-major `n × n`; only the upper triangle is evaluated.
    pub hmetric: Vec<ScalarField>,
    pub vmetric: Vec<ScalarField>,
    pub nconn: NConnectionField,
}

impl DMetricField {
    pub fn new(chart: ChartSpec, hmetric: Vec<ScalarField>, vmetric: Vec<ScalarField>, nconn: NConnectionField) -> Result<Self> {
        let (n, m) = (chart.n, chart.m);
        if hmetric.len() != n * n || vmetric.len() != m * m {
            return Err(Error::Validation("metric blocks have the wrong size".into()));
        }
        if nconn.n != n || nconn.m != m {
            return Err(Error::Validation("N-connection shape does not match the chart".into()));
        }
        check_arity(&hmetric, n + m)?;
        check_arity(&vmetric, n + m)?;
        Ok(DMetricField {
            chart,
            hmetric,
            vmetric,
            nconn,
        })
    }

    /// Diagonal blocks given by one field per diagonal entry.
    pub fn diagonal(chart: ChartSpec, g: Vec<ScalarField>, h: Vec<ScalarField>, nconn: NConnectionField) -> Result<Self> {
        let dim = chart.dim();
        let full = |d: Vec<ScalarField>| -> Vec<ScalarField> {
            let k = d.len();
            let mut out = Vec::with_capacity(k * k);
            for i in 0..k {
                for j in 0..k {
                    out.push(if i == j { d[i].clone() } else { ScalarField::constant(dim, 0.0) });
                }
            }
            out
        };
        if g.len() != chart.n || h.len() != chart.m {
            return Err(Error::Validation("diagonal blocks have the wrong length".into()));
        }
        DMetricField::new(chart, full(g), full(h), nconn)
    }
}

/// Jets of the d-metric data at one point. `g`, `h` are row-major square
/// blocks and `nc[i * m + a] = N_i^a`; orders may differ between the parts.
#[derive(Clone, Debug)]
pub struct DMetricJets {
    pub n: usize,
    pub m: usize,
    pub g: Vec<Jet>,
    pub h: Vec<Jet>,
    pub nc: Vec<Jet>,
}

impl DMetricJets {
    pub fn metric_order(&self) -> usize {
        jetmat::min_order(&self.g).min(jetmat::min_order(&self.h))
    }

    pub fn nconn_order(&self) -> usize {
        jetmat::min_order(&self.nc)
    }

    pub fn g_values(&self) -> DMatrix<f64> {
        jetmat::values(&self.g, self.n)
    }

    pub fn h_values(&self) -> DMatrix<f64> {
        jetmat::values(&self.h, self.m)
    }

    pub fn n_values(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.m, |i, a| self.nc[i * self.m + a].value())
    }
}

/// Anything that yields d-metric jets on a chart.
pub trait DMetricSource: Send + Sync {
    fn chart(&self) -> &ChartSpec;

    /// Jets with every part of order at least `order`.
    fn jets(&self, point: &[f64], order: usize) -> Result<DMetricJets>;

    /// Jets with the metric blocks of order at least `metric_order` and N of
    /// order at least `nconn_order`.
    fn jets_split(&self, point: &[f64], metric_order: usize, nconn_order: usize) -> Result<DMetricJets> {
        self.jets(point, metric_order.max(nconn_order))
    }

    /// Largest `order` accepted by [`DMetricSource::jets`].
    fn max_order(&self) -> usize {
        MAX_ORDER
    }
}

impl DMetricSource for DMetricField {
    fn chart(&self) -> &ChartSpec {
        &self.chart
    }

    fn jets(&self, point: &[f64], order: usize) -> Result<DMetricJets> {
        let (n, m) = (self.chart.n, self.chart.m);
        Ok(DMetricJets {
            n,
            m,
            g: symmetric_jets(&self.hmetric, n, point, order)?,
            h: symmetric_jets(&self.vmetric, m, point, order)?,
            nc: self.nconn.jets(point, order)?,
        })
    }
}

fn symmetric_jets(fields: &[ScalarField], k: usize, point: &[f64], order: usize) -> Result<Vec<Jet>> {
    let mut out: Vec<Option<Jet>> = vec![None; k * k];
    for i in 0..k {
        for j in i..k {
            let v = eval_jet(&fields[i * k + j], point, order)?;
            out[j * k + i] = Some(v.clone());
            out[i * k + j] = Some(v);
        }
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

/// Pointwise d-metric sample.
#[derive(Clone, Debug, PartialEq)]
pub struct DMetricSample {
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub nc: DMatrix<f64>,
}

pub fn sample(src: &dyn DMetricSource, point: &[f64]) -> Result<DMetricSample> {
    let j = src.jets(point, 0)?;
    Ok(DMetricSample {
        g: j.g_values(),
        h: j.h_values(),
        nc: j.n_values(),
    })
}

/// N-elongated frame and coframe at a point, both stored with one
/// (co)vector per row in coordinate components, so that
/// `frame · coframeᵀ = I`.
#[derive(Clone, Debug)]
pub struct FramePair {
    pub frame: DMatrix<f64>,
    pub coframe: DMatrix<f64>,
    pub point: Vec<f64>,
}

impl FramePair {
    pub fn from_n(nc: &DMatrix<f64>, point: &[f64]) -> FramePair {
        let (n, m) = (nc.nrows(), nc.ncols());
        let dim = n + m;
        let mut frame = DMatrix::identity(dim, dim);
        let mut coframe = DMatrix::identity(dim, dim);
        for i in 0..n {
            for b in 0..m {
                frame[(i, n + b)] = -nc[(i, b)];
                coframe[(n + b, i)] = nc[(i, b)];
            }
        }
        FramePair {
            frame,
            coframe,
            point: point.to_vec(),
        }
    }

    pub fn duality_residual(&self) -> f64 {
        let p = &self.frame * self.coframe.transpose();
        (p - DMatrix::identity(self.frame.nrows(), self.frame.nrows())).amax()
    }
}

pub fn adapted_frames(nconn: &NConnectionField, point: &[f64]) -> Result<FramePair> {
    Ok(FramePair::from_n(&nconn.values(point)?, point))
}

/// Frame derivation `e_α f` on a jet: `e_i = ∂_i − N_i^b ∂_b`, `e_a = ∂_a`.
pub fn elongated(n: usize, m: usize, nc: &[Jet], alpha: usize, f: &Jet) -> Jet {
    let mut out = f.partial(alpha);
    if alpha < n {
        for b in 0..m {
            out -= &nc[alpha * m + b] * &f.partial(n + b);
        }
    }
    out
}

/// Anholonomy `[e_α, e_β] = W^γ_{αβ} e_γ` as jets indexed `[γ][α][β]`.
///
/// Nonzero families: `W^b_{ia} = ∂_a N_i^b` and
/// `W^c_{ij} = Ω^c_{ij} = e_j N_i^c − e_i N_j^c`.
pub fn anholonomy_jets(n: usize, m: usize, nc: &[Jet]) -> Vec<Jet> {
    let dim = n + m;
    let nv = nc[0].nvars();
    let order = jetmat::min_order(nc).saturating_sub(1);
    let mut w = vec![Jet::zero(nv, order); dim * dim * dim];
    let at = |c: usize, a: usize, b: usize| (c * dim + a) * dim + b;
    for i in 0..n {
        for a in 0..m {
            for b in 0..m {
                let d = nc[i * m + b].partial(n + a);
                w[at(n + b, i, n + a)] = d.clone();
                w[at(n + b, n + a, i)] = -d;
            }
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            for c in 0..m {
                let om = elongated(n, m, nc, j, &nc[i * m + c]) - elongated(n, m, nc, i, &nc[j * m + c]);
                w[at(n + c, i, j)] = om;
            }
        }
    }
    w
}

/// Anholonomy at a point: `W^γ_{αβ}` over total indices and the N-curvature
/// `Ω^a_{ij}` (dims `[m, n, n]`).
pub fn anholonomy(nconn: &NConnectionField, point: &[f64]) -> Result<(TensorBlock, TensorBlock)> {
    let (n, m) = (nconn.n, nconn.m);
    let dim = n + m;
    let w = anholonomy_jets(n, m, &nconn.jets(point, 1)?);
    let wt = TensorBlock::from_data(
        &[dim, dim, dim],
        &[Variance::Up, Variance::Down, Variance::Down],
        &[Role::Total; 3],
        w.iter().map(Jet::value).collect(),
    );
    let mut om = TensorBlock::zeros(&[m, n, n], &[Variance::Up, Variance::Down, Variance::Down], &[Role::V, Role::H, Role::H]);
    for a in 0..m {
        for i in 0..n {
            for j in 0..n {
                om.set(&[a, i, j], wt.get(&[n + a, i, j]));
            }
        }
    }
    Ok((wt, om))
}

/// Coordinate metric `Θᵀ diag(g, h) Θ` with `Θ` the coframe.
pub fn assemble_matrix(s: &DMetricSample) -> DMatrix<f64> {
    let (n, m) = (s.g.nrows(), s.h.nrows());
    let fp = FramePair::from_n(&s.nc, &[]);
    let mut d = DMatrix::zeros(n + m, n + m);
    d.view_mut((0, 0), (n, n)).copy_from(&s.g);
    d.view_mut((n, n), (m, m)).copy_from(&s.h);
    let g = fp.coframe.transpose() * d * &fp.coframe;
    (&g + g.transpose()) * 0.5
}

pub fn assemble_metric(src: &dyn DMetricSource, point: &[f64]) -> Result<DMatrix<f64>> {
    Ok(assemble_matrix(&sample(src, point)?))
}

/// Coordinate metric as jets (row-major `dim × dim`), order limited by the
/// lower of the metric and N orders.
pub fn assemble_jets(j: &DMetricJets) -> Vec<Jet> {
    let (n, m) = (j.n, j.m);
    let dim = n + m;
    let mut out = Vec::with_capacity(dim * dim);
    // G_ij = g_ij + N_i^a N_j^b h_ab, G_ia = N_i^b h_ba, G_ab = h_ab.
    let nh = |i: usize, a: usize| {
        let mut acc = &j.nc[i * m] * &j.h[a];
        for b in 1..m {
            acc += &j.nc[i * m + b] * &j.h[b * m + a];
        }
        acc
    };
    for r in 0..dim {
        for c in 0..dim {
            let v = match (r < n, c < n) {
                (true, true) => {
                    let mut acc = j.g[r * n + c].clone();
                    for a in 0..m {
                        acc += &j.nc[c * m + a] * &nh(r, a);
                    }
                    acc
                }
                (true, false) => nh(r, c - n),
                (false, true) => nh(c, r - n),
                (false, false) => j.h[(r - n) * m + (c - n)].clone(),
            };
            out.push(v);
        }
    }
    out
}

/// Inverse of [`assemble_matrix`]. When `nc` is `None` the N-connection is
/// recovered as `N_i^e = G_{ia} h^{ae}`.
pub fn split_metric(g: &DMatrix<f64>, n: usize, nc: Option<&DMatrix<f64>>) -> Result<DMetricSample> {
    let dim = g.nrows();
    let m = dim - n;
    let h = g.view((n, n), (m, m)).into_owned();
    let det = h.determinant();
    if !(det.abs() > jetmat::DET_EPS) {
        return Err(Error::DegenerateVBlock(det.abs()));
    }
    let nc = match nc {
        Some(nc) => nc.clone(),
        None => {
            let hinv = h.clone().try_inverse().ok_or(Error::DegenerateVBlock(det.abs()))?;
            g.view((0, n), (n, m)) * hinv
        }
    };
    let gh = g.view((0, 0), (n, n)).into_owned() - &nc * &h * nc.transpose();
    Ok(DMetricSample { g: gh, h, nc })
}

/// Everything about the adapted frame at a point that a connection needs:
/// block metric, its inverse, N and the anholonomy, all as jets.
#[derive(Clone, Debug)]
pub struct Adapted {
    pub n: usize,
    pub m: usize,
    pub metric: Vec<Jet>,
    pub inverse: Vec<Jet>,
    pub nc: Vec<Jet>,
    pub w: Vec<Jet>,
}

impl Adapted {
    pub fn new(j: &DMetricJets) -> Result<Adapted> {
        let (n, m) = (j.n, j.m);
        let dim = n + m;
        let nv = j.g[0].nvars();
        let order = j.metric_order();
        let mut metric = vec![Jet::zero(nv, order); dim * dim];
        for a in 0..n {
            for b in 0..n {
                metric[a * dim + b] = j.g[a * n + b].clone();
            }
        }
        for a in 0..m {
            for b in 0..m {
                metric[(n + a) * dim + n + b] = j.h[a * m + b].clone();
            }
        }
        let ginv = jetmat::inverse(&j.g, n)?;
        let hinv = jetmat::inverse(&j.h, m).map_err(|e| match e {
            Error::SingularMetric(_) => Error::DegenerateVBlock(j.h_values().determinant().abs()),
            e => e,
        })?;
        let mut inverse = vec![Jet::zero(nv, order); dim * dim];
        for a in 0..n {
            for b in 0..n {
                inverse[a * dim + b] = ginv[a * n + b].clone();
            }
        }
        for a in 0..m {
            for b in 0..m {
                inverse[(n + a) * dim + n + b] = hinv[a * m + b].clone();
            }
        }
        let w = if j.nconn_order() > 0 { anholonomy_jets(n, m, &j.nc) } else { Vec::new() };
        Ok(Adapted {
            n,
            m,
            metric,
            inverse,
            nc: j.nc.clone(),
            w,
        })
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn e(&self, alpha: usize, f: &Jet) -> Jet {
        elongated(self.n, self.m, &self.nc, alpha, f)
    }

    pub fn g(&self, a: usize, b: usize) -> &Jet {
        &self.metric[a * self.dim() + b]
    }

    pub fn ginv(&self, a: usize, b: usize) -> &Jet {
        &self.inverse[a * self.dim() + b]
    }

    /// `W^c_{ab}`; panics if N was supplied at order 0.
    pub fn w(&self, c: usize, a: usize, b: usize) -> &Jet {
        let d = self.dim();
        &self.w[(c * d + a) * d + b]
    }

    pub fn metric_values(&self) -> DMatrix<f64> {
        jetmat::values(&self.metric, self.dim())
    }

    pub fn inverse_values(&self) -> DMatrix<f64> {
        jetmat::values(&self.inverse, self.dim())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart22() -> ChartSpec {
        ChartSpec::new(2, 2, vec![1, 1, 1, -1]).unwrap()
    }

    fn nconn(src: [&str; 4]) -> NConnectionField {
        NConnectionField::new(2, 2, src.iter().map(|s| ScalarField::parse(4, s).unwrap()).collect()).unwrap()
    }

    #[test]
    fn chart_validation() {
        assert!(ChartSpec::new(3, 3, vec![1; 6]).is_err());
        assert!(ChartSpec::new(2, 2, vec![1, 1, 2, 1]).is_err());
        assert_eq!(chart22().negatives(), (0, 1));
    }

    #[test]
    fn holonomic_frames_are_identity() {
        let f = adapted_frames(&NConnectionField::zero(2, 2), &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(f.frame, DMatrix::identity(4, 4));
        assert_eq!(f.coframe, DMatrix::identity(4, 4));
    }

    #[test]
    fn elongation_signs() {
        let f = adapted_frames(&nconn(["0.7", "0", "0", "0"]), &[0.0; 4]).unwrap();
        assert_eq!(f.frame[(0, 2)], -0.7);
        assert_eq!(f.coframe[(2, 0)], 0.7);
        assert!(f.duality_residual() < 1e-15);
    }

    #[test]
    fn linear_fiber_coefficient() {
        let (w, om) = anholonomy(&nconn(["u4", "0", "0", "0"]), &[0.3, 0.1, 0.2, 0.5]).unwrap();
        // ∂_{y^2} N_1^1 = 1 sits at W^{n+0}_{0, n+1}.
        assert_eq!(w.get(&[2, 0, 3]), 1.0);
        assert_eq!(w.get(&[2, 3, 0]), -1.0);
        assert_eq!(om.max_abs(), 0.0);
    }

    #[test]
    fn omega_is_antisymmetric() {
        let (_, om) = anholonomy(&nconn(["u2*u3", "sin(u1)*u4", "u1^2*u3", "exp(u2)"]), &[0.3, 0.1, 0.2, 0.5]).unwrap();
        for a in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(om.get(&[a, i, j]), -om.get(&[a, j, i]));
                }
            }
        }
        assert!(om.max_abs() > 0.1);
    }

    #[test]
    fn assembled_block_formula() {
        let s = DMetricSample {
            g: DMatrix::identity(2, 2),
            h: DMatrix::identity(2, 2),
            nc: DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]),
        };
        let g = assemble_matrix(&s);
        assert!((g[(0, 0)] - 1.25).abs() < 1e-15);
        assert!((g[(0, 2)] - 0.5).abs() < 1e-15);
        let back = split_metric(&g, 2, None).unwrap();
        assert!((back.nc - s.nc).amax() < 1e-14);
        assert!((back.g - s.g).amax() < 1e-14);
    }

    #[test]
    fn degenerate_vertical_block() {
        let mut g = DMatrix::identity(4, 4);
        g[(3, 3)] = 0.0;
        assert!(matches!(split_metric(&g, 2, None), Err(Error::DegenerateVBlock(_))));
    }

    #[test]
    fn jet_assembly_matches_matrix() {
        let dm = DMetricField::diagonal(
            chart22(),
            vec![ScalarField::parse(4, "1+u1^2").unwrap(), ScalarField::parse(4, "2").unwrap()],
            vec![ScalarField::parse(4, "exp(u3)").unwrap(), ScalarField::parse(4, "-1").unwrap()],
            nconn(["u2", "u3*u4", "0", "sin(u1)"]),
        )
        .unwrap();
        let p = [0.2, -0.3, 0.4, 0.1];
        let j = dm.jets(&p, 1).unwrap();
        let gj = jetmat::values(&assemble_jets(&j), 4);
        assert!((gj - assemble_metric(&dm, &p).unwrap()).amax() < 1e-14);
    }
}
