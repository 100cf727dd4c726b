//! Finsler generating functions: fiber Hessian, semispray, canonical
//! N-connection, Sasaki lift and the vierbein congruence solve.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::field::{eval_jet, ScalarField};
use crate::geometry::{ChartSpec, DMetricJets, DMetricSource};
use crate::jetmat;
use crate::jets::{Jet, MAX_ORDER};
use crate::tensor::{Role, TensorBlock, Variance};

/// A fundamental function on the slit tangent chart `(x, y)`, `n = m`.
///
/// In relaxed mode only `L = F²` is given and the Hessian is required to be
/// nondegenerate rather than positive definite.
#[derive(Clone, Debug)]
pub struct FinslerFunction {
    pub n: usize,
    f: Option<ScalarField>,
    l: ScalarField,
    pub relaxed: bool,
}

impl FinslerFunction {
    pub fn from_f(n: usize, f: ScalarField) -> Result<FinslerFunction> {
        check(n, &f)?;
        let g = f.clone();
        let l = ScalarField::new(
            2 * n,
            format!("({})^2", f.label()),
            {
                let g = g.clone();
                move |u| {
                    let v = g.eval_on(u)?;
                    Ok(&v * &v)
                }
            },
            move |u| g.eval(u).map(|v| v * v),
        );
        Ok(FinslerFunction {
            n,
            f: Some(f),
            l,
            relaxed: false,
        })
    }

    /// Relaxed-signature mode: `l` is `F²` and may be indefinite.
    pub fn from_squared(n: usize, l: ScalarField) -> Result<FinslerFunction> {
        check(n, &l)?;
        Ok(FinslerFunction {
            n,
            f: None,
            l,
            relaxed: true,
        })
    }

    pub fn squared(&self) -> &ScalarField {
        &self.l
    }

    /// `F`, or `sqrt|L|` in relaxed mode.
    pub fn f_jet(&self, point: &[f64], order: usize) -> Result<Jet> {
        match &self.f {
            Some(f) => eval_jet(f, point, order),
            None => eval_jet(&self.l, point, order)?.abs()?.sqrt(),
        }
    }

    fn slit(&self, point: &[f64]) -> Result<()> {
        if point.len() != 2 * self.n {
            return Err(Error::ArityMismatch {
                expected: 2 * self.n,
                got: point.len(),
            });
        }
        if point[self.n..].iter().all(|&y| y == 0.0) {
            return Err(Error::ZeroSection);
        }
        Ok(())
    }

    /// Jet of `L = F²` at `order`.
    pub fn l_jet(&self, point: &[f64], order: usize) -> Result<Jet> {
        self.slit(point)?;
        eval_jet(&self.l, point, order)
    }
}

fn check(n: usize, f: &ScalarField) -> Result<()> {
    if f.arity() != 2 * n {
        return Err(Error::ArityMismatch {
            expected: 2 * n,
            got: f.arity(),
        });
    }
    Ok(())
}

/// Fiber Hessian, semispray and N-connection built from one jet of `L`.
/// With `L` at order `K`: `g̃` and `G̃` come out at order `K − 2`,
/// `Ñ` at `K − 3`.
#[derive(Clone, Debug)]
pub struct SprayJets {
    pub g: Vec<Jet>,
    pub spray: Vec<Jet>,
    pub nc: Vec<Jet>,
}

pub fn spray_jets(ff: &FinslerFunction, point: &[f64], order: usize) -> Result<SprayJets> {
    let n = ff.n;
    let l = ff.l_jet(point, order)?;
    if order < 2 {
        return Err(Error::OrderUnsupported {
            requested: order,
            max: MAX_ORDER,
        });
    }
    let dl: Vec<Jet> = (0..2 * n).map(|k| l.partial(k)).collect();
    let mut g = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            g.push(dl[n + i].partial(n + j) * 0.5);
        }
    }
    let det = jetmat::values(&g, n).determinant();
    if !(det.abs() > jetmat::DET_EPS) {
        return Err(Error::SingularHessian(det.abs()));
    }
    let ginv = jetmat::inverse(&g, n)?;
    let u = Jet::variables(point, order - 2);
    let a: Vec<Jet> = (0..n)
        .map(|j| {
            let mut acc = -dl[j].truncate(order - 2);
            for i in 0..n {
                acc += &u[n + i] * &dl[n + j].partial(i);
            }
            acc
        })
        .collect();
    let spray: Vec<Jet> = (0..n)
        .map(|k| {
            let mut acc = &ginv[k * n] * &a[0];
            for j in 1..n {
                acc += &ginv[k * n + j] * &a[j];
            }
            acc * 0.25
        })
        .collect();
    let nc = if order >= 3 {
        let mut nc = Vec::with_capacity(n * n);
        for j in 0..n {
            for a in 0..n {
                nc.push(spray[a].partial(n + j));
            }
        }
        nc
    } else {
        Vec::new()
    };
    Ok(SprayJets { g, spray, nc })
}

pub fn hessian_metric(ff: &FinslerFunction, point: &[f64]) -> Result<TensorBlock> {
    let n = ff.n;
    let l = ff.l_jet(point, 2)?;
    let mut out = TensorBlock::zeros(&[n, n], &[Variance::Down; 2], &[Role::H; 2]);
    for i in 0..n {
        for j in 0..n {
            out.set(&[i, j], 0.5 * l.derivative(&[n + i, n + j]));
        }
    }
    Ok(out)
}

pub fn semispray(ff: &FinslerFunction, point: &[f64]) -> Result<TensorBlock> {
    let s = spray_jets(ff, point, 2)?;
    Ok(TensorBlock::from_data(
        &[ff.n],
        &[Variance::Up],
        &[Role::H],
        s.spray.iter().map(Jet::value).collect(),
    ))
}

/// `Ñ_j^a = ∂G̃^a/∂y^j`, dims `[n, m]` indexed `[j][a]`.
pub fn canonical_nconnection(ff: &FinslerFunction, point: &[f64]) -> Result<TensorBlock> {
    let s = spray_jets(ff, point, 3)?;
    let n = ff.n;
    Ok(TensorBlock::from_data(
        &[n, n],
        &[Variance::Down, Variance::Up],
        &[Role::H, Role::V],
        s.nc.iter().map(Jet::value).collect(),
    ))
}

/// The lift `g̃_ij dx dx + g̃_ab e^a e^b` with `N = Ñ`, evaluated lazily.
#[derive(Clone, Debug)]
pub struct SasakiLift {
    pub ff: FinslerFunction,
    pub chart: ChartSpec,
}

pub fn sasaki_lift(ff: &FinslerFunction, chart: ChartSpec) -> Result<SasakiLift> {
    if chart.n != ff.n {
        return Err(Error::WrongDimension(format!(
            "chart is {}+{}, function has n = {}",
            chart.n, chart.m, ff.n
        )));
    }
    Ok(SasakiLift { ff: ff.clone(), chart })
}

impl DMetricSource for SasakiLift {
    fn chart(&self) -> &ChartSpec {
        &self.chart
    }

    /// `L` is expanded to `order + 3`: the metric comes out at `order + 1`,
    /// N at `order`.
    fn jets(&self, point: &[f64], order: usize) -> Result<DMetricJets> {
        self.jets_split(point, order, order)
    }

    fn jets_split(&self, point: &[f64], metric_order: usize, nconn_order: usize) -> Result<DMetricJets> {
        let k = (metric_order + 2).max(nconn_order + 3);
        if k > MAX_ORDER {
            return Err(Error::OrderUnsupported {
                requested: k,
                max: MAX_ORDER,
            });
        }
        let s = spray_jets(&self.ff, point, k)?;
        Ok(DMetricJets {
            n: self.ff.n,
            m: self.ff.n,
            h: s.g.clone(),
            g: s.g,
            nc: s.nc,
        })
    }

    fn max_order(&self) -> usize {
        MAX_ORDER - 3
    }
}

/// Residuals of 1-homogeneity in `y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomogeneityReport {
    /// `max_β |F(x, βy) − βF(x, y)| / (1 + |F|)`.
    pub scaling: f64,
    /// `|y^i ∂F/∂y^i − F| / (1 + |F|)`.
    pub euler: f64,
    /// `|y^i y^j g̃_ij − F²| / (1 + F²)`, with `F²` signed in relaxed mode.
    pub hessian: f64,
}

impl HomogeneityReport {
    pub fn max(&self) -> f64 {
        self.scaling.max(self.euler).max(self.hessian)
    }
}

pub fn homogeneity_check(ff: &FinslerFunction, point: &[f64], betas: &[f64]) -> Result<HomogeneityReport> {
    ff.slit(point)?;
    let n = ff.n;
    let f = ff.f_jet(point, 1)?;
    let f0 = f.value();
    let mut scaling: f64 = 0.0;
    for &b in betas {
        let mut q = point.to_vec();
        for y in &mut q[n..] {
            *y *= b;
        }
        let fb = ff.f_jet(&q, 0)?.value();
        scaling = scaling.max((fb - b * f0).abs() / (1.0 + f0.abs()));
    }
    let euler = ((0..n).map(|i| point[n + i] * f.derivative(&[n + i])).sum::<f64>() - f0).abs() / (1.0 + f0.abs());
    let l = ff.l_jet(point, 2)?;
    let mut yy = 0.0;
    for i in 0..n {
        for j in 0..n {
            yy += 0.5 * l.derivative(&[n + i, n + j]) * point[n + i] * point[n + j];
        }
    }
    let hessian = (yy - l.value()).abs() / (1.0 + l.value().abs());
    Ok(HomogeneityReport { scaling, euler, hessian })
}

/// Congruence factor `G = Aᵀ J A` with `J = diag(±1)`: eigenvalues sorted
/// descending, each eigenvector signed so its first nonzero entry is
/// positive.
pub fn congruence_factor(g: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let k = g.nrows();
    let sym = (g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut a = DMatrix::zeros(k, k);
    let mut j = Vec::with_capacity(k);
    for (row, &c) in order.iter().enumerate() {
        let lam = eig.eigenvalues[c];
        let mut v = eig.eigenvectors.column(c).into_owned();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-14) {
            if *first < 0.0 {
                v = -v;
            }
        }
        let s = lam.abs().sqrt();
        for col in 0..k {
            a[(row, col)] = s * v[col];
        }
        j.push(lam.signum());
    }
    (a, j)
}

/// Solves `eᵀ·Fmat·e = G` by composing congruence factors.
pub fn solve_finsler_vierbein(g: &DMatrix<f64>, fmat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    for m in [g, fmat] {
        if !(m.determinant().abs() > jetmat::DET_EPS) {
            return Err(Error::SingularMetric(format!("|det| = {:e}", m.determinant().abs())));
        }
    }
    let (a, ja) = congruence_factor(g);
    let (b, jb) = congruence_factor(fmat);
    if ja != jb {
        return Err(Error::SignatureMismatch);
    }
    let binv = b.try_inverse().ok_or_else(|| Error::SingularMetric("factor not invertible".into()))?;
    Ok(binv * a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn randers() -> FinslerFunction {
        FinslerFunction::from_f(2, ScalarField::parse(4, "sqrt(u3^2+u4^2) + 0.3*u3").unwrap()).unwrap()
    }

    #[test]
    fn euclidean_quadratic_hessian() {
        let ff = FinslerFunction::from_f(2, ScalarField::parse(4, "sqrt(u3^2+u4^2)").unwrap()).unwrap();
        let g = hessian_metric(&ff, &[0.4, -0.2, 0.7, 1.3]).unwrap();
        assert!((g.get(&[0, 0]) - 1.0).abs() < 1e-12);
        assert!(g.get(&[0, 1]).abs() < 1e-12);
        assert!(semispray(&ff, &[0.4, -0.2, 0.7, 1.3]).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn zero_section() {
        assert!(matches!(hessian_metric(&randers(), &[0.1, 0.2, 0.0, 0.0]), Err(Error::ZeroSection)));
    }

    #[test]
    fn hessian_is_scale_invariant() {
        let ff = randers();
        let a = hessian_metric(&ff, &[0.1, 0.2, 0.6, 0.9]).unwrap();
        let b = hessian_metric(&ff, &[0.1, 0.2, 1.2, 1.8]).unwrap();
        assert!(a.max_diff(&b) < 1e-10);
    }

    #[test]
    fn randers_homogeneity() {
        let r = homogeneity_check(&randers(), &[0.1, 0.2, 0.6, 0.9], &[0.5, 2.0, 3.0]).unwrap();
        assert!(r.max() < 1e-12, "{r:?}");
    }

    #[test]
    fn non_homogeneous_is_flagged() {
        let ff = FinslerFunction::from_f(2, ScalarField::parse(4, "u3^2+u4^2").unwrap()).unwrap();
        let r = homogeneity_check(&ff, &[0.0, 0.0, 1.0, 1.0], &[2.0]).unwrap();
        assert!(r.euler > 0.5);
    }

    #[test]
    fn vierbein_branches() {
        let f = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, -1.5]);
        let e = solve_finsler_vierbein(&f, &f).unwrap();
        assert!((e - DMatrix::identity(3, 3)).amax() < 1e-12);
        let e = solve_finsler_vierbein(&(&f * 4.0), &f).unwrap();
        assert!((e - DMatrix::identity(3, 3) * 2.0).amax() < 1e-12);
    }

    #[test]
    fn vierbein_signature_mismatch() {
        let g = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0]));
        let f = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(solve_finsler_vierbein(&g, &f), Err(Error::SignatureMismatch)));
    }
}
