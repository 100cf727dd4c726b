//! Scenario files: JSON documents describing a chart, its metric data
//! through expression strings, a domain box and tolerance overrides. The
//! built-in catalog uses the same format.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Deserialize;

use crate::connections::ConnectionKind;
use crate::error::{Error, Result};
use crate::expr::parse_with;
use crate::field::ScalarField;
use crate::finsler::{sasaki_lift, FinslerFunction};
use crate::geometry::{ChartSpec, DMetricField, DMetricJets, DMetricSource, NConnectionField};
use crate::jetmat;
use crate::jets::Jet;

const CATALOG: [(&str, &str); 5] = [
    ("minkowski22", include_str!("../scenarios/minkowski22.json")),
    ("schwarzschild22", include_str!("../scenarios/schwarzschild22.json")),
    ("randers_flat", include_str!("../scenarios/randers_flat.json")),
    ("quadratic_schwarzschild44", include_str!("../scenarios/quadratic_schwarzschild44.json")),
    (
        "conformally_flat_nonholonomic",
        include_str!("../scenarios/conformally_flat_nonholonomic.json"),
    ),
];

/// Names of the built-in scenarios.
pub fn catalog_names() -> Vec<&'static str> {
    CATALOG.iter().map(|(n, _)| *n).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// `g`, `h` and `N` given.
    Metric,
    /// `F` (or `L = F²`) given on a slit chart.
    Finsler,
    /// Full coordinate metric given, `N` given or recovered from it.
    Coordinate,
}

type Matrix = Vec<Vec<String>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(default)]
    description: String,
    kind: ScenarioKind,
    n: usize,
    m: usize,
    signature: Vec<i32>,
    #[serde(default)]
    constants: BTreeMap<String, f64>,
    g: Option<Matrix>,
    h: Option<Matrix>,
    #[serde(rename = "N")]
    nconn: Option<Matrix>,
    #[serde(rename = "F")]
    f: Option<String>,
    #[serde(rename = "L")]
    l: Option<String>,
    metric: Option<Matrix>,
    base: Option<Matrix>,
    domain: Vec<[f64; 2]>,
    #[serde(default)]
    points: Vec<Vec<f64>>,
    connection: Option<ConnectionKind>,
    conformal_factor: Option<String>,
    #[serde(default)]
    tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    vacuum: bool,
    #[serde(default)]
    conformally_flat: bool,
}

/// A validated scenario.
#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub kind: ScenarioKind,
    pub chart: ChartSpec,
    pub source: Arc<dyn DMetricSource>,
    pub finsler: Option<FinslerFunction>,
    /// Base metric `g_ij(x)` of a quadratic Finsler function, when declared.
    pub base: Option<Vec<ScalarField>>,
    /// Every scalar field of the scenario with its label.
    pub fields: Vec<(String, ScalarField)>,
    pub domain: Vec<(f64, f64)>,
    /// Explicit sample points; seeded sampling is used when empty.
    pub points: Vec<Vec<f64>>,
    pub connection: ConnectionKind,
    pub conformal_factor: ScalarField,
    pub tolerances: BTreeMap<String, f64>,
    /// The metric solves the vacuum equations for `connection`.
    pub vacuum: bool,
    /// The metric is conformally flat for `connection`.
    pub conformally_flat: bool,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("chart", &self.chart)
            .finish()
    }
}

/// Loads a catalog scenario by name, or a scenario file by path.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario> {
    if let Some((_, text)) = CATALOG.iter().find(|(n, _)| *n == name_or_path) {
        return parse_scenario_str(text);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::Validation(format!(
            "'{name_or_path}' is neither a catalog scenario nor an existing file"
        )));
    }
    parse_scenario(path)
}

pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario_str(&text)
}

pub fn parse_scenario_str(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| {
        if e.is_data() {
            Error::Validation(e.to_string())
        } else {
            Error::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            }
        }
    })?;
    build(file)
}

struct Fields<'a> {
    arity: usize,
    consts: &'a BTreeMap<String, f64>,
    all: Vec<(String, ScalarField)>,
}

impl Fields<'_> {
    fn field(&mut self, label: String, src: &str) -> Result<ScalarField> {
        let e = parse_with(src, self.consts).map_err(|err| match err {
            Error::Parse { line, column, message } => Error::Parse {
                line,
                column,
                message: format!("{label}: {message}"),
            },
            other => other,
        })?;
        let f = ScalarField::from_expr(self.arity, src.to_string(), e).map_err(|e| Error::Validation(format!("{label}: {e}")))?;
        self.all.push((label, f.clone()));
        Ok(f)
    }

    fn matrix(&mut self, name: &str, rows: &Matrix, r: usize, c: usize) -> Result<Vec<ScalarField>> {
        if rows.len() != r || rows.iter().any(|row| row.len() != c) {
            return Err(Error::Validation(format!("{name} must be a {r}x{c} matrix")));
        }
        let mut out = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                out.push(self.field(format!("{name}[{i}][{j}]"), s)?);
            }
        }
        Ok(out)
    }

    fn symmetric(&mut self, name: &str, rows: &Matrix, k: usize) -> Result<Vec<ScalarField>> {
        if rows.len() != k || rows.iter().any(|row| row.len() != k) {
            return Err(Error::Validation(format!("{name} must be a {k}x{k} matrix")));
        }
        for i in 0..k {
            for j in 0..i {
                if rows[i][j].trim() != rows[j][i].trim() {
                    return Err(Error::Validation(format!("{name} is not symmetric at ({i}, {j})")));
                }
            }
        }
        self.matrix(name, rows, k, k)
    }
}

fn require<T>(v: Option<T>, what: &str, kind: &str) -> Result<T> {
    v.ok_or_else(|| Error::Validation(format!("{kind} scenarios need '{what}'")))
}

fn forbid<T>(v: &Option<T>, what: &str, kind: &str) -> Result<()> {
    if v.is_some() {
        return Err(Error::Validation(format!("'{what}' is not used by {kind} scenarios")));
    }
    Ok(())
}

fn build(file: ScenarioFile) -> Result<Scenario> {
    let chart = ChartSpec::new(file.n, file.m, file.signature.clone())?;
    let (n, m, dim) = (chart.n, chart.m, chart.dim());
    if file.domain.len() != dim {
        return Err(Error::Validation(format!("domain needs {dim} intervals, got {}", file.domain.len())));
    }
    for (k, [lo, hi]) in file.domain.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Validation(format!("domain interval {k} is empty or not finite")));
        }
    }
    let domain: Vec<(f64, f64)> = file.domain.iter().map(|[a, b]| (*a, *b)).collect();
    for p in &file.points {
        if p.len() != dim {
            return Err(Error::Validation(format!("sample point has {} coordinates, chart has {dim}", p.len())));
        }
        if p.iter().zip(&domain).any(|(x, (lo, hi))| x < lo || x > hi) {
            return Err(Error::Validation(format!("sample point {p:?} lies outside the domain box")));
        }
    }
    let mut fields = Fields {
        arity: dim,
        consts: &file.constants,
        all: Vec::new(),
    };
    let kind_name = format!("{:?}", file.kind).to_lowercase();
    let mut finsler = None;
    let mut base = None;
    let source: Arc<dyn DMetricSource> = match file.kind {
        ScenarioKind::Metric => {
            forbid(&file.f, "F", &kind_name)?;
            forbid(&file.l, "L", &kind_name)?;
            forbid(&file.metric, "metric", &kind_name)?;
            let g = fields.symmetric("g", require(file.g.as_ref(), "g", &kind_name)?, n)?;
            let h = fields.symmetric("h", require(file.h.as_ref(), "h", &kind_name)?, m)?;
            let nc = match &file.nconn {
                Some(rows) => NConnectionField::new(n, m, fields.matrix("N", rows, n, m)?)?,
                None => NConnectionField::zero(n, m),
            };
            Arc::new(DMetricField::new(chart.clone(), g, h, nc)?)
        }
        ScenarioKind::Finsler => {
            forbid(&file.g, "g", &kind_name)?;
            forbid(&file.h, "h", &kind_name)?;
            forbid(&file.nconn, "N", &kind_name)?;
            forbid(&file.metric, "metric", &kind_name)?;
            let ff = match (&file.f, &file.l) {
                (Some(f), None) => FinslerFunction::from_f(n, fields.field("F".into(), f)?)?,
                (None, Some(l)) => FinslerFunction::from_squared(n, fields.field("L".into(), l)?)?,
                _ => return Err(Error::Validation("finsler scenarios need exactly one of 'F' and 'L'".into())),
            };
            if let Some(rows) = &file.base {
                base = Some(fields.symmetric("base", rows, n)?);
            }
            let lift = sasaki_lift(&ff, chart.clone())?;
            finsler = Some(ff);
            Arc::new(lift)
        }
        ScenarioKind::Coordinate => {
            forbid(&file.f, "F", &kind_name)?;
            forbid(&file.l, "L", &kind_name)?;
            forbid(&file.g, "g", &kind_name)?;
            forbid(&file.h, "h", &kind_name)?;
            let full = fields.symmetric("metric", require(file.metric.as_ref(), "metric", &kind_name)?, dim)?;
            let nc = match &file.nconn {
                Some(rows) => Some(NConnectionField::new(n, m, fields.matrix("N", rows, n, m)?)?),
                None => None,
            };
            Arc::new(CoordinateMetric {
                chart: chart.clone(),
                metric: full,
                nconn: nc,
            })
        }
    };
    if base.is_none() && file.base.is_some() {
        return Err(Error::Validation("'base' is only used by finsler scenarios".into()));
    }
    let factor_src = file.conformal_factor.as_deref().unwrap_or("1 + 0.1*sin(u1)");
    let conformal_factor = fields.field("conformal_factor".into(), factor_src)?;
    let connection = file.connection.unwrap_or(if file.kind == ScenarioKind::Finsler {
        ConnectionKind::Cartan
    } else {
        ConnectionKind::Canonical
    });
    if connection == ConnectionKind::Custom {
        return Err(Error::Validation("scenarios cannot select a custom connection".into()));
    }
    if connection.needs_sasaki() && file.kind != ScenarioKind::Finsler {
        return Err(Error::Validation(format!(
            "the {} connection needs a finsler scenario",
            connection.name()
        )));
    }
    let scenario = Scenario {
        name: file.name,
        description: file.description,
        kind: file.kind,
        chart,
        source,
        finsler,
        base,
        fields: fields.all,
        domain,
        points: file.points,
        connection,
        conformal_factor,
        tolerances: file.tolerances,
        vacuum: file.vacuum,
        conformally_flat: file.conformally_flat,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Points used to validate a scenario when it is loaded.
const VALIDATION_POINTS: usize = 8;

impl Scenario {
    /// Sample points: the explicit list if one was given, otherwise
    /// `npoints` seeded points in the domain box.
    pub fn sample_points(&self, seed: u64, npoints: usize) -> Vec<Vec<f64>> {
        if !self.points.is_empty() {
            return self.points.iter().take(npoints.max(1)).cloned().collect();
        }
        let mut rng = Lcg::new(seed);
        (0..npoints)
            .map(|_| self.domain.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.next_f64()).collect())
            .collect()
    }

    /// Checks that every field evaluates on the domain and that the
    /// declared signature matches the inertia of both blocks at the
    /// domain centre and a few seeded points.
    pub fn validate(&self) -> Result<()> {
        let centre: Vec<f64> = self.domain.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
        let mut pts = vec![centre];
        pts.extend(self.sample_points(0, VALIDATION_POINTS));
        for p in &pts {
            self.validate_at(p)?;
        }
        Ok(())
    }

    pub fn validate_at(&self, p: &[f64]) -> Result<()> {
        for (label, f) in &self.fields {
            let v = f
                .eval(p)
                .map_err(|e| Error::Validation(format!("{label} fails to evaluate at {p:?}: {e}")))?;
            if !v.is_finite() {
                return Err(Error::Validation(format!("{label} is not finite at {p:?}")));
            }
        }
        let j = self
            .source
            .jets(p, 0)
            .map_err(|e| Error::Validation(format!("metric data fails at {p:?}: {e}")))?;
        let (nh, nv) = self.chart.negatives();
        let got = (negatives(&j.g_values())?, negatives(&j.h_values())?);
        if got != (nh, nv) {
            return Err(Error::Validation(format!(
                "declared signature {:?} has ({nh}, {nv}) negative directions per block, metric has {got:?} at {p:?}",
                self.chart.signature
            )));
        }
        Ok(())
    }

    /// Tolerance for a check, after scenario overrides and the global scale.
    pub fn tolerance(&self, id: &str, default: f64, scale: f64) -> f64 {
        self.tolerances.get(id).copied().unwrap_or(default) * scale
    }
}

fn negatives(a: &DMatrix<f64>) -> Result<usize> {
    let e = SymmetricEigen::new((a + a.transpose()) * 0.5).eigenvalues;
    let scale = e.amax().max(1.0);
    if e.iter().any(|x| x.abs() < 1e-12 * scale) {
        return Err(Error::Validation("metric block is degenerate".into()));
    }
    Ok(e.iter().filter(|x| **x < 0.0).count())
}

/// 64-bit linear congruential generator used for seeded sampling.
#[derive(Clone, Debug)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub const MULTIPLIER: u64 = 6364136223846793005;
    pub const INCREMENT: u64 = 1442695040888963407;

    pub fn new(seed: u64) -> Lcg {
        Lcg { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(Self::MULTIPLIER).wrapping_add(Self::INCREMENT);
        self.state
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// A metric given in coordinates, split along the last `m` coordinates:
/// `h_ab = G_ab`, `N_i^a = G_ib h^ba` unless given, `g_ij = G_ij − N_i^a h_ab N_j^b`.
#[derive(Clone, Debug)]
pub struct CoordinateMetric {
    pub chart: ChartSpec,
    pub metric: Vec<ScalarField>,
    pub nconn: Option<NConnectionField>,
}

impl DMetricSource for CoordinateMetric {
    fn chart(&self) -> &ChartSpec {
        &self.chart
    }

    fn jets(&self, point: &[f64], order: usize) -> Result<DMetricJets> {
        let (n, m, dim) = (self.chart.n, self.chart.m, self.chart.dim());
        let gj: Vec<Jet> = self
            .metric
            .iter()
            .map(|f| crate::field::eval_jet(f, point, order))
            .collect::<Result<_>>()?;
        let at = |r: usize, c: usize| &gj[r * dim + c];
        let h: Vec<Jet> = (0..m * m).map(|k| at(n + k / m, n + k % m).clone()).collect();
        let nc = match &self.nconn {
            Some(nc) => nc.jets(point, order)?,
            None => {
                let hinv = jetmat::inverse(&h, m)?;
                let mut nc = Vec::with_capacity(n * m);
                for i in 0..n {
                    for a in 0..m {
                        let mut acc = at(i, n) * &hinv[a];
                        for b in 1..m {
                            acc += at(i, n + b) * &hinv[b * m + a];
                        }
                        nc.push(acc);
                    }
                }
                nc
            }
        };
        let mut g = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = at(i, j).clone();
                for a in 0..m {
                    for b in 0..m {
                        acc -= &(&nc[i * m + a] * &h[a * m + b]) * &nc[j * m + b];
                    }
                }
                g.push(acc);
            }
        }
        Ok(DMetricJets { n, m, g, h, nc })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_loads() {
        for name in catalog_names() {
            let s = load_scenario(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
        }
    }

    #[test]
    fn lcg_is_reproducible() {
        let mut a = Lcg::new(42);
        let mut b = Lcg::new(42);
        for _ in 0..10 {
            let x = a.next_f64();
            assert_eq!(x, b.next_f64());
            assert!((0.0..1.0).contains(&x));
        }
        let mut c = Lcg::new(0);
        assert_eq!(c.next_u64(), Lcg::INCREMENT);
    }

    #[test]
    fn malformed_expression_reports_column() {
        let text = r#"{"name":"x","kind":"metric","n":2,"m":2,"signature":[1,1,1,1],
            "g":[["sin(","0"],["0","1"]],"h":[["1","0"],["0","1"]],"domain":[[0,1],[0,1],[0,1],[0,1]]}"#;
        match parse_scenario_str(text) {
            Err(Error::Parse { column, message, .. }) => {
                assert_eq!(column, 5);
                assert!(message.contains("g[0][0]"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_syntax_error_has_position() {
        match parse_scenario_str("{\n  \"name\": }") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn signature_mismatch_is_rejected() {
        let text = r#"{"name":"x","kind":"metric","n":2,"m":2,"signature":[1,1,1,1],
            "g":[["1","0"],["0","1"]],"h":[["1","0"],["0","-1"]],"domain":[[0,1],[0,1],[0,1],[0,1]]}"#;
        assert!(matches!(parse_scenario_str(text), Err(Error::Validation(_))));
    }

    #[test]
    fn coordinate_metric_recovers_blocks() {
        let text = r#"{"name":"c","kind":"coordinate","n":2,"m":2,"signature":[1,1,1,-1],
            "metric":[["1+u3^2","0","u3","0"],["0","1","0","0"],["u3","0","1","0"],["0","0","0","-1"]],
            "domain":[[0,1],[0,1],[0,1],[0,1]]}"#;
        let s = parse_scenario_str(text).unwrap();
        let j = s.source.jets(&[0.2, 0.3, 0.5, 0.1], 1).unwrap();
        assert!((j.g[0].value() - 1.0).abs() < 1e-15);
        assert!((j.nc[0].value() - 0.5).abs() < 1e-15);
    }
}
