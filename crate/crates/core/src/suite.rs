//! Check suites over a scenario and the report they produce.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::conformal::{bianchi_residual, conformal_invariance_check, lambda_relation, weyl_of, weyl_trace, ConformalFactor};
use crate::connections::{connection_at, distortion_curvature_residual, lc_constraint_residual, ConnectionKind};
use crate::error::{Error, Result};
use crate::field::jet_crosscheck;
use crate::finsler::{canonical_nconnection, hessian_metric, homogeneity_check, solve_finsler_vierbein};
use crate::geometry::{assemble_matrix, sample, split_metric, FramePair};
use crate::jets::Jet;
use crate::scenario::{Lcg, Scenario, ScenarioKind};
use crate::spin::{
    build_soldering, conformal_psi_residual, curvature_spinors, finsler_blockwise_spinors, lowered_curvature, spin_frame, spinor_bianchi_of,
    weyl_lowered,
};
use crate::tensor::Block;
use crate::twistor::{
    finsler_twistor_blocks, flat_twistor_solution, holonomy_curvature, spirality_and_kinematics, spirality_conformal_residual, twistor_curvature,
    twistor_residual, twistor_transport, Cubic, FlatChart, TwistorValue,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Frames,
    Connections,
    Conformal,
    Spin,
    Twistor,
    All,
}

impl Suite {
    pub const EACH: [Suite; 5] = [Suite::Frames, Suite::Connections, Suite::Conformal, Suite::Spin, Suite::Twistor];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Frames => "frames",
            Suite::Connections => "connections",
            Suite::Conformal => "conformal",
            Suite::Spin => "spin",
            Suite::Twistor => "twistor",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Suite> {
        Suite::EACH
            .iter()
            .chain(std::iter::once(&Suite::All))
            .find(|x| x.name() == s)
            .copied()
            .ok_or_else(|| Error::Validation(format!("unknown suite '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub points: usize,
    /// Multiplies every tolerance.
    pub tol_scale: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: 42,
            points: 100,
            tol_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub id: String,
    pub anchor: String,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
    pub points: usize,
    pub ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub checks: Vec<CheckRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Text,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Format> {
        match s {
            "json" => Ok(Format::Json),
            "text" => Ok(Format::Text),
            _ => Err(Error::Validation(format!("unknown format '{s}'"))),
        }
    }
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario: {}", self.scenario);
        let _ = writeln!(
            out,
            "{:<44} {:>12} {:>10} {:>6} {:>6} {:>10}",
            "check", "residual", "tol", "pass", "points", "ms"
        );
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<44} {:>12.3e} {:>10.1e} {:>6} {:>6} {:>10.1}",
                c.id,
                c.residual,
                c.tol,
                if c.pass { "ok" } else { "FAIL" },
                c.points,
                c.ms
            );
            if let Some(e) = &c.error {
                let _ = writeln!(out, "    error: {e}");
            }
        }
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Text => self.to_text(),
        }
    }
}

/// Writes the report to `path`, or to stdout when `path` is `None`.
pub fn emit_report(r: &Report, format: Format, path: Option<&Path>) -> Result<()> {
    let mut text = r.render(format);
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

/// Whether a residual must stay below its tolerance or exceed it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bound {
    Below,
    Above,
}

struct Runner<'a> {
    s: &'a Scenario,
    opts: RunOptions,
    pts: Vec<Vec<f64>>,
    checks: Vec<CheckRecord>,
}

impl Runner<'_> {
    #[allow(clippy::too_many_arguments)]
    fn record(&mut self, id: &str, anchor: &str, tol: f64, bound: Bound, points: usize, start: Instant, res: Result<f64>) {
        let tol = self.s.tolerance(id, tol, self.opts.tol_scale);
        let (residual, error) = match res {
            Ok(r) if r.is_finite() => (r, None),
            Ok(r) => (f64::MAX, Some(format!("non-finite residual {r}"))),
            Err(e) => (f64::MAX, Some(e.to_string())),
        };
        let pass = error.is_none()
            && match bound {
                Bound::Below => residual <= tol,
                Bound::Above => residual > tol,
            };
        self.checks.push(CheckRecord {
            id: id.to_string(),
            anchor: anchor.to_string(),
            residual,
            tol,
            pass,
            points,
            ms: start.elapsed().as_secs_f64() * 1e3,
            error,
        });
    }

    /// Max of `f` over the first `limit` sample points.
    fn over_points(&mut self, id: &str, anchor: &str, tol: f64, bound: Bound, limit: usize, mut f: impl FnMut(&[f64]) -> Result<f64>) {
        let start = Instant::now();
        let pts: Vec<Vec<f64>> = self.pts.iter().take(limit).cloned().collect();
        let mut worst: f64 = 0.0;
        let mut res = Ok(0.0);
        for p in &pts {
            match f(p) {
                Ok(r) => worst = worst.max(if r.is_nan() { f64::INFINITY } else { r }),
                Err(e) => {
                    res = Err(e);
                    break;
                }
            }
        }
        let res = res.map(|_| worst);
        self.record(id, anchor, tol, bound, pts.len(), start, res);
    }

    fn check(&mut self, id: &str, anchor: &str, tol: f64, f: impl FnMut(&[f64]) -> Result<f64>) {
        self.over_points(id, anchor, tol, Bound::Below, usize::MAX, f);
    }
}

/// Runs one suite (or all applicable suites) over seeded points.
pub fn run_suite(s: &Scenario, suite: Suite, opts: &RunOptions) -> Result<Report> {
    let mut r = Runner {
        s,
        opts: *opts,
        pts: s.sample_points(opts.seed, opts.points.max(1)),
        checks: Vec::new(),
    };
    match suite {
        Suite::All => {
            for x in Suite::EACH {
                match run_one(&mut r, x) {
                    Err(Error::SuiteInapplicable(_)) => {}
                    other => other?,
                }
            }
        }
        x => run_one(&mut r, x)?,
    }
    Ok(Report {
        scenario: s.name.clone(),
        checks: r.checks,
    })
}

fn run_one(r: &mut Runner, suite: Suite) -> Result<()> {
    match suite {
        Suite::Frames => frames(r),
        Suite::Connections => connections(r),
        Suite::Conformal => conformal(r),
        Suite::Spin => spin(r),
        Suite::Twistor => twistor(r),
        Suite::All => unreachable!("expanded by run_suite"),
    }
}

fn lorentzian_blocks(s: &Scenario) -> Result<()> {
    let c = &s.chart;
    let neg = c.signature.iter().filter(|&&x| x < 0).count();
    match c.dim() {
        4 if neg == 1 => Ok(()),
        8 if c.negatives() == (1, 1) => Ok(()),
        _ => Err(Error::SuiteInapplicable(format!(
            "{} has signature {:?}; spinor suites need a Lorentzian 4-dimensional chart or two Lorentzian 4-blocks",
            s.name, c.signature
        ))),
    }
}

/// Smooth test vector field for the commutator identity.
fn probe_vector(point: &[f64], order: usize) -> Vec<Jet> {
    let u = Jet::variables(point, order);
    let d = point.len();
    (0..d).map(|a| &(&u[a] * &u[(a + 1) % d]).sin() + &(&u[(a + 2) % d] * 0.5)).collect()
}

fn frames(r: &mut Runner) -> Result<()> {
    let s = r.s;
    let src = s.source.clone();
    r.check("frames.duality", "e_α(e^β) = δ", 1e-12, |p| {
        let j = src.jets(p, 0)?;
        Ok(FramePair::from_n(&j.n_values(), p).duality_residual())
    });
    r.check("frames.block_roundtrip", "coordinate metric ↔ (g, h, N)", 1e-10, |p| {
        let smp = sample(src.as_ref(), p)?;
        let back = split_metric(&assemble_matrix(&smp), s.chart.n, None)?;
        let scale = 1.0 + smp.g.amax().max(smp.h.amax());
        Ok(((&back.g - &smp.g).amax().max((&back.h - &smp.h).amax()).max((&back.nc - &smp.nc).amax())) / scale)
    });
    r.check("frames.signature", "declared signature = metric inertia", 0.0, |p| {
        s.validate_at(p).map(|_| 0.0)
    });
    let fields = s.fields.clone();
    r.over_points("frames.jet_vs_fd", "jets agree with finite differences", 1e-6, Bound::Below, 10, |p| {
        let mut worst: f64 = 0.0;
        for (_, f) in &fields {
            worst = worst.max(jet_crosscheck(f, p, 2)?);
        }
        Ok(worst)
    });
    if let Some(ff) = s.finsler.clone() {
        r.check("finsler.homogeneity", "F(x, βy) = βF, Euler, y y g̃ = F²", 1e-9, |p| {
            Ok(homogeneity_check(&ff, p, &[0.5, 2.0, 3.7])?.max())
        });
        if let Some(base) = s.base.clone() {
            let n = s.chart.n;
            let bj = base.clone();
            r.check("finsler.quadratic_hessian", "g̃_ij = base g_ij", 1e-9, |p| {
                let h = hessian_metric(&ff, p)?;
                let mut w: f64 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        w = w.max((h.get(&[i, j]) - bj[i * n + j].eval(p)?).abs());
                    }
                }
                Ok(w)
            });
            r.check("finsler.quadratic_nconnection", "Ñ_j^a = γ^a_jb y^b", 1e-7, |p| {
                let nc = canonical_nconnection(&ff, p)?;
                let x = &p[..n];
                let gj: Vec<Jet> = base
                    .iter()
                    .map(|f| f.eval_on(&Jet::variables(p, 1)).map(|j| j.truncate(1)))
                    .collect::<Result<_>>()?;
                // Christoffel symbols of the base metric in the x variables
                let gm = DMatrix::from_fn(n, n, |i, j| gj[i * n + j].value());
                let gi = gm.try_inverse().ok_or_else(|| Error::SingularMetric("base metric".into()))?;
                let dg = |k: usize, i: usize, j: usize| gj[i * n + j].derivative(&[k]);
                let _ = x;
                let mut w: f64 = 0.0;
                for jj in 0..n {
                    for a in 0..n {
                        let mut want = 0.0;
                        for b in 0..n {
                            let mut gam = 0.0;
                            for l in 0..n {
                                gam += 0.5 * gi[(a, l)] * (dg(jj, b, l) + dg(b, jj, l) - dg(l, jj, b));
                            }
                            want += gam * p[n + b];
                        }
                        w = w.max((nc.get(&[jj, a]) - want).abs());
                    }
                }
                Ok(w)
            });
            r.check("finsler.vierbein", "eᵀ g̃ e = base g", 1e-9, |p| {
                let h = hessian_metric(&ff, p)?;
                let fm = DMatrix::from_fn(n, n, |i, j| h.get(&[i, j]));
                let bm = DMatrix::from_fn(n, n, |i, j| base[i * n + j].eval(p).unwrap_or(f64::NAN));
                let e = solve_finsler_vierbein(&bm, &fm)?;
                Ok((e.transpose() * &fm * &e - &bm).amax())
            });
        }
    }
    Ok(())
}

fn connections(r: &mut Runner) -> Result<()> {
    let s = r.s;
    let src = s.source.clone();
    let mut compatible = vec![ConnectionKind::Canonical];
    if s.kind == ScenarioKind::Finsler {
        compatible.push(ConnectionKind::Cartan);
    }
    if !compatible.contains(&s.connection) {
        compatible.push(s.connection);
    }
    for &k in &compatible {
        r.check(&format!("connections.metric_compat.{}", k.name()), "D_γ g_{αβ} = 0", 1e-8, |p| {
            Ok(connection_at(src.as_ref(), k, p, 0)?.nonmetricity())
        });
        if k == ConnectionKind::LeviCivita {
            continue;
        }
        let (n, d) = (s.chart.n, s.chart.dim());
        r.check(&format!("connections.torsion_zeros.{}", k.name()), "T^i_jk = T^a_bc = 0", 1e-10, |p| {
            let c = connection_at(src.as_ref(), k, p, 1)?;
            let t = c.torsion()?;
            let mut w: f64 = 0.0;
            for x in 0..d {
                for y in 0..d {
                    for z in 0..d {
                        let same = (x < n) == (y < n) && (y < n) == (z < n);
                        if same {
                            w = w.max(t[(x * d + y) * d + z].value().abs());
                        }
                    }
                }
            }
            Ok(w)
        });
    }
    if s.kind == ScenarioKind::Finsler {
        // On the lift of a pseudo-Riemannian metric Berwald and Chern are
        // metric; otherwise they must show nonmetricity.
        let (bound, tol, anchor) = if s.base.is_some() {
            (Bound::Below, 1e-8, "D_γ g_{αβ} = 0 on a quadratic lift")
        } else {
            (Bound::Above, 1e-4, "‖Dg‖ > 0 somewhere")
        };
        for k in [ConnectionKind::Berwald, ConnectionKind::Chern] {
            r.over_points(&format!("connections.nonmetricity.{}", k.name()), anchor, tol, bound, usize::MAX, |p| {
                Ok(connection_at(src.as_ref(), k, p, 0)?.nonmetricity())
            });
        }
    }
    let k = s.connection;
    r.over_points(
        &format!("connections.commutator.{}", k.name()),
        "[D_α, D_β]V = R V − T D V",
        1e-8,
        Bound::Below,
        20,
        |p| {
            let c = connection_at(src.as_ref(), k, p, 1)?;
            c.commutator_residual(&probe_vector(p, c.order() + 1))
        },
    );
    r.over_points(
        &format!("connections.distortion.{}", k.name()),
        "R(D) = R(∇) + ∇Q + QQ",
        1e-8,
        Bound::Below,
        20,
        |p| {
            let c = connection_at(src.as_ref(), k, p, 1)?;
            let lc = connection_at(src.as_ref(), ConnectionKind::LeviCivita, p, 1)?;
            distortion_curvature_residual(&c, &lc)
        },
    );
    if s.vacuum {
        r.check(&format!("connections.vacuum_einstein.{}", k.name()), "E_{αβ} = 0", 1e-7, |p| {
            Ok(connection_at(src.as_ref(), k, p, 1)?.package()?.einstein.max_abs())
        });
        if k == ConnectionKind::Canonical {
            r.check("connections.lc_constraint", "canonical D = ∇ constraints", 1e-10, |p| {
                let (a, b, c) = lc_constraint_residual(&connection_at(src.as_ref(), k, p, 0)?);
                Ok(a.max(b).max(c))
            });
        }
    }
    Ok(())
}

fn conformal(r: &mut Runner) -> Result<()> {
    let s = r.s;
    if s.chart.dim() != 4 {
        return Err(Error::SuiteInapplicable(format!(
            "the Weyl decomposition is four-dimensional; {} has dimension {}",
            s.name,
            s.chart.dim()
        )));
    }
    let src = s.source.clone();
    let k = s.connection;
    let factor = ConformalFactor::new(s.conformal_factor.clone());
    // The canonical d-connection picks up derivative-of-ϖ terms in its mixed
    // blocks, so the invariance is checked on the Levi-Civita connection.
    let lc = ConnectionKind::LeviCivita;
    r.check("conformal.weyl_invariance", "Ĉ^τ_{αβγ} = C^τ_{αβγ}", 1e-6, |p| {
        Ok(conformal_invariance_check(src.clone(), &factor, lc, p)?.1)
    });
    r.check("conformal.weyl_traceless", "g^{αδ} C_{αβγδ} = 0", 1e-9, |p| {
        let c = connection_at(src.as_ref(), k, p, 1)?;
        Ok(weyl_trace(&weyl_of(&c)?.weyl_lowered, &c.geo.inverse_values()))
    });
    if s.conformally_flat {
        r.check("conformal.weyl_vanishes", "C = 0", 1e-8, |p| {
            Ok(weyl_of(&connection_at(src.as_ref(), k, p, 1)?)?.weyl_lowered.max_abs())
        });
    }
    if k == ConnectionKind::LeviCivita {
        r.over_points("conformal.bianchi", "D C + D P identities", 1e-5, Bound::Below, 20, |p| {
            let (a, b) = bianchi_residual(&connection_at(src.as_ref(), k, p, 2)?)?;
            Ok(a.max(b))
        });
        r.check("conformal.lambda_relation", "4ϖ²Λ̂ − 4Λ = −ϖ⁻¹□ϖ", 1e-6, |p| {
            let (a, b) = lambda_relation(src.clone(), &factor, k, p)?;
            Ok((a + b).abs())
        });
    }
    Ok(())
}

fn spin(r: &mut Runner) -> Result<()> {
    let s = r.s;
    lorentzian_blocks(s)?;
    let src = s.source.clone();
    let k = s.connection;
    if s.chart.dim() == 8 {
        r.check("spin.blockwise", "h/v curvature spinors rebuild R and S", 1e-7, |p| {
            let b = finsler_blockwise_spinors(src.as_ref(), k, p)?;
            Ok([
                b.h.reconstruction,
                b.v.reconstruction,
                b.h.x_structure,
                b.v.x_structure,
                b.h.hermiticity,
                b.v.hermiticity,
            ]
            .into_iter()
            .fold(0.0, f64::max))
        });
        return Ok(());
    }
    r.check("spin.soldering", "g = −γγεε", 1e-12, |p| {
        let so = build_soldering(src.as_ref(), p)?;
        Ok(so.reconstruction_residual(&crate::geometry::Adapted::new(&src.jets(p, 0)?)?.metric_values()))
    });
    r.check("spin.parallel", "D γ = D ε = 0", 1e-10, |p| {
        Ok(spin_frame(&connection_at(src.as_ref(), k, p, 0)?, Block::Total)?.parallel_residual())
    });
    // One pass computes every curvature-spinor residual at a point.
    let mut per_point = Vec::new();
    let start = Instant::now();
    let mut failure = None;
    for p in &r.pts {
        let res = (|| -> Result<[f64; 7]> {
            let c = connection_at(src.as_ref(), k, p, 2)?;
            let so = spin_frame(&c, Block::Total)?.solder;
            let (cs, split) = curvature_spinors(&lowered_curvature(&c)?, &so)?;
            let lam = (cs.lambda - c.package()?.scalar / 24.0).abs();
            let (b1, b2) = spinor_bianchi_of(&c, &so)?;
            Ok([
                cs.x_structure.max(cs.hermiticity),
                cs.reconstruction,
                lam.max(cs.lambda_imag.abs()),
                split.residual(&weyl_lowered(&c)?),
                b1.max(b2),
                cs.phi.max_abs().max(cs.lambda.abs()),
                0.0,
            ])
        })();
        match res {
            Ok(v) => per_point.push(v),
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let mut items = vec![
        ("spin.structure", "X = Ψ + Λ(εε + εε), Φ hermitian", 1e-9, 0),
        ("spin.reconstruction", "R from (Ψ, Φ, Λ)", 1e-7, 1),
        ("spin.lambda", "Λ = sR/24", 1e-9, 2),
        ("spin.selfdual_split", "C = ⁻C + ⁺C", 1e-8, 3),
        ("spin.bianchi", "spinor Bianchi identities", 1e-5, 4),
    ];
    if s.vacuum {
        items.push(("spin.vacuum", "Φ = Λ = 0", 1e-7, 5));
    }
    for (id, anchor, tol, slot) in items {
        let tol = s.tolerance(id, tol, r.opts.tol_scale);
        let (residual, error) = match &failure {
            Some(e) => (f64::MAX, Some(e.clone())),
            None => (per_point.iter().map(|v| v[slot]).fold(0.0, f64::max), None),
        };
        r.checks.push(CheckRecord {
            id: id.into(),
            anchor: anchor.into(),
            residual,
            tol,
            pass: error.is_none() && residual <= tol,
            points: per_point.len(),
            ms: elapsed,
            error,
        });
    }
    let factor = ConformalFactor::new(s.conformal_factor.clone());
    r.check("spin.psi_conformal", "ϖ²Ψ̂ = Ψ in dyad components", 1e-6, |p| {
        conformal_psi_residual(src.clone(), &factor, ConnectionKind::LeviCivita, p)
    });
    Ok(())
}

fn twistor_sample(rng: &mut Lcg) -> TwistorValue {
    let mut c = || C64::new(2.0 * rng.next_f64() - 1.0, 2.0 * rng.next_f64() - 1.0);
    TwistorValue::new([c(), c()], [c(), c()])
}

fn towards_centre(s: &Scenario, p: &[f64]) -> Vec<f64> {
    p.iter().zip(&s.domain).map(|(x, (lo, hi))| x + 0.5 * (0.5 * (lo + hi) - x)).collect()
}

fn twistor(r: &mut Runner) -> Result<()> {
    let s = r.s;
    lorentzian_blocks(s)?;
    let src = s.source.clone();
    let k = s.connection;
    let mut rng = Lcg::new(r.opts.seed ^ 0x0074_7769_7374_6f72);
    let z0 = twistor_sample(&mut rng);
    let w0 = twistor_sample(&mut rng);
    let origin = r.pts[0].clone();
    if s.chart.dim() == 8 {
        let (zh, zv) = (z0, w0);
        let probe = finsler_twistor_blocks(src.clone(), k, &origin, &zh, &zv, &origin)?;
        for (name, res) in [("h", &probe.h), ("v", &probe.v)] {
            if res.is_err() {
                continue;
            }
            let id = format!("twistor.block_{name}.solution");
            let n = s.chart.n;
            // The block chart is flat along its own leaf; the other block's
            // coordinates stay at the origin.
            r.check(&id, "closed-form block twistor solves its equation", 1e-9, |p| {
                let mut q = origin.clone();
                let range = if name == "h" { 0..n } else { n..q.len() };
                q[range.clone()].copy_from_slice(&p[range]);
                let b = finsler_twistor_blocks(src.clone(), k, &origin, &zh, &zv, &q)?;
                let b = if name == "h" { b.h } else { b.v };
                Ok(b?.residual)
            });
        }
        return Ok(());
    }
    let flat = r.pts.iter().take(5).all(|p| {
        connection_at(src.as_ref(), k, p, 1)
            .and_then(|c| crate::conformal::riemann_at(&c))
            .map(|rm| rm.max_abs() < 1e-12)
            .unwrap_or(false)
    });
    if flat {
        let chart = FlatChart::new(src.clone(), k, Block::Total, &origin)?;
        let field = chart.omega_field(&z0);
        r.check("twistor.flat_residual", "D^{(A}_{A'}ω^{B)} = 0 for the closed form", 1e-10, |p| {
            Ok(twistor_residual(&field, src.as_ref(), k, Block::Total, p)?.max_abs())
        });
        r.over_points(
            "twistor.transport_closed_form",
            "transport = closed form along lines",
            1e-9,
            Bound::Below,
            20,
            |p| {
                let line = Cubic::line(&origin, p);
                let traj = twistor_transport(&z0, &line, src.as_ref(), k, 8)?;
                let mut w: f64 = 0.0;
                for (i, z) in traj.iter().enumerate() {
                    w = w.max(z.max_diff(&flat_twistor_solution(&chart, &z0, &line_point(&line, i, 8))?));
                }
                Ok(w)
            },
        );
    }
    r.over_points("twistor.transport_order", "RK4 step-halving order ≈ 4", 0.5, Bound::Below, 5, |p| {
        let line = Cubic::line(p, &towards_centre(s, p));
        let end = |n: usize| -> Result<TwistorValue> { Ok(*twistor_transport(&z0, &line, src.as_ref(), k, n)?.last().expect("nonempty")) };
        let (a, b, c) = (end(4)?, end(8)?, end(16)?);
        let (e1, e2) = (a.max_diff(&b), b.max_diff(&c));
        if e1 < 1e-12 {
            return Ok(0.0);
        }
        Ok(((e1 / e2).log2() - 4.0).abs())
    });
    r.over_points("twistor.pairing", "W̄_α Z^α conserved", 1e-8, Bound::Below, 5, |p| {
        let line = Cubic::line(p, &towards_centre(s, p));
        let tz = twistor_transport(&z0, &line, src.as_ref(), k, 32)?;
        let tw = twistor_transport(&w0, &line, src.as_ref(), k, 32)?;
        let p0 = TwistorValue::pairing(&w0, &z0);
        Ok(tz.iter().zip(&tw).fold(0.0, |m, (z, w)| m.max((TwistorValue::pairing(w, z) - p0).norm())))
    });
    r.over_points("twistor.linearity", "transport is linear", 1e-12, Bound::Below, 3, |p| {
        let line = Cubic::line(p, &towards_centre(s, p));
        let (a, b) = (C64::new(0.7, -0.2), C64::new(-1.3, 0.4));
        let zc = z0.combine(a, &w0, b);
        let tz = twistor_transport(&z0, &line, src.as_ref(), k, 8)?;
        let tw = twistor_transport(&w0, &line, src.as_ref(), k, 8)?;
        let tc = twistor_transport(&zc, &line, src.as_ref(), k, 8)?;
        Ok(tc
            .iter()
            .zip(tz.iter().zip(&tw))
            .fold(0.0, |m, (c, (z, w))| m.max(c.max_diff(&z.combine(a, w, b)))))
    });
    let factor = ConformalFactor::new(s.conformal_factor.clone());
    r.check("twistor.spirality_conformal", "s(Ẑ) = s(Z)", 1e-9, |p| {
        spirality_conformal_residual(&z0, src.clone(), &factor, p)
    });
    r.check("twistor.kinematics", "p null, S = s p", 1e-10, |p| {
        let kin = spirality_and_kinematics(&z0, &build_soldering(src.as_ref(), p)?)?;
        Ok(kin.null_residual.max(kin.spin_residual).max(kin.reality))
    });
    let dirs: Vec<(Vec<f64>, Vec<f64>)> = (0..r.pts.len())
        .map(|_| {
            (
                (0..4).map(|_| 2.0 * rng.next_f64() - 1.0).collect(),
                (0..4).map(|_| 2.0 * rng.next_f64() - 1.0).collect(),
            )
        })
        .collect();
    let mut idx = 0;
    r.over_points(
        "twistor.curvature_holonomy",
        "K formula = parallelogram holonomy",
        1e-5,
        Bound::Below,
        5,
        |p| {
            let (t, v) = &dirs[idx];
            idx += 1;
            let kf = twistor_curvature(src.as_ref(), k, t, v, p)?;
            let kh = holonomy_curvature(src.as_ref(), k, t, v, p, 0.04, 4)?;
            Ok(kf.max_diff(&kh).max(kh.lower_left()))
        },
    );
    if flat {
        let mut idx = 0;
        r.check("twistor.curvature_vanishes", "K = 0", 1e-10, |p| {
            let (t, v) = &dirs[idx % dirs.len()];
            idx += 1;
            Ok(twistor_curvature(src.as_ref(), k, t, v, p)?.max_abs())
        });
    }
    Ok(())
}

fn line_point(line: &Cubic, i: usize, steps: usize) -> Vec<f64> {
    use crate::twistor::Path as _;
    line.point(i as f64 / steps as f64)
}

/// Shared handle used by callers that run suites on several threads.
pub type SharedScenario = Arc<Scenario>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario;

    fn opts(points: usize) -> RunOptions {
        RunOptions {
            seed: 7,
            points,
            tol_scale: 1.0,
        }
    }

    #[test]
    fn empty_report_json() {
        let r = Report {
            scenario: "x".into(),
            checks: vec![],
        };
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v, serde_json::json!({"scenario": "x", "checks": []}));
        assert!(r.all_pass());
    }

    #[test]
    fn failed_check_is_recorded_verbatim() {
        let c = CheckRecord {
            id: "a".into(),
            anchor: "b".into(),
            residual: 0.25,
            tol: 1e-3,
            pass: false,
            points: 3,
            ms: 1.0,
            error: None,
        };
        let r = Report {
            scenario: "x".into(),
            checks: vec![c],
        };
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["checks"][0]["pass"], false);
        assert_eq!(v["checks"][0]["residual"], 0.25);
        assert!(!r.all_pass());
        assert!(r.to_text().contains("FAIL"));
    }

    #[test]
    fn json_roundtrip() {
        let s = load_scenario("minkowski22").unwrap();
        let r = run_suite(&s, Suite::Frames, &opts(3)).unwrap();
        let back: Report = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn suite_names_parse() {
        for x in Suite::EACH.into_iter().chain([Suite::All]) {
            assert_eq!(x.name().parse::<Suite>().unwrap(), x);
        }
        assert!("nope".parse::<Suite>().is_err());
        assert_eq!("json".parse::<Format>().unwrap(), Format::Json);
    }

    #[test]
    fn spin_on_euclidean_is_inapplicable() {
        let s = load_scenario("randers_flat").unwrap();
        assert!(matches!(run_suite(&s, Suite::Spin, &opts(2)), Err(Error::SuiteInapplicable(_))));
        let all = run_suite(&s, Suite::All, &opts(2)).unwrap();
        assert!(all.checks.iter().all(|c| !c.id.starts_with("spin.")));
    }

    #[test]
    fn tolerance_scale_flips_verdicts() {
        let s = load_scenario("schwarzschild22").unwrap();
        let tight = run_suite(&s, Suite::Frames, &RunOptions { tol_scale: 1e-30, ..opts(2) }).unwrap();
        assert!(!tight.all_pass());
    }

    #[test]
    fn checks_appear_once() {
        let s = load_scenario("minkowski22").unwrap();
        let r = run_suite(&s, Suite::Connections, &opts(2)).unwrap();
        let mut ids: Vec<_> = r.checks.iter().map(|c| c.id.clone()).collect();
        let n = ids.len();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), n);
    }
}
