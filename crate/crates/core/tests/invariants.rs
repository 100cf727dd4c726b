//! Property tests over randomly generated d-metrics, conformal factors and
//! twistors.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use nonholo::conformal::{conformal_invariance_check, lambda_relation, weyl_of, weyl_trace, ConformalFactor};
use nonholo::connections::{connection_at, distortion_curvature_residual, ConnectionKind};
use nonholo::geometry::{Adapted, NConnectionField};
use nonholo::spin::{conformal_psi_residual, curvature_spinors_at};
use nonholo::twistor::{spirality, spirality_conformal_residual, twistor_transport, Cubic, TwistorValue};
use nonholo::{jet_crosscheck, ChartSpec, DMetricField, DMetricSource, FramePair, Jet, ScalarField};

fn sf(s: &str) -> ScalarField {
    ScalarField::parse(4, s).unwrap()
}

/// Lorentzian 2+2 d-metric with coefficient perturbations `c` in [−0.4, 0.4].
fn metric(c: &[f64; 8]) -> Arc<dyn DMetricSource> {
    let chart = ChartSpec::new(2, 2, vec![1, 1, 1, -1]).unwrap();
    let g = vec![sf(&format!("2 + {}*sin(u1 + u3)", c[0])), sf(&format!("1 + {}*u3^2", c[1].abs()))];
    let h = vec![sf(&format!("1.5 + {}*cos(u2)", c[2])), sf(&format!("-(1 + {}*u1^2)", c[3].abs()))];
    let n = NConnectionField::new(
        2,
        2,
        vec![
            sf(&format!("{}*u3", c[4])),
            sf(&format!("{}*u1*u4", c[5])),
            sf(&format!("{}*sin(u4)", c[6])),
            sf(&format!("{}*u2*u3", c[7])),
        ],
    )
    .unwrap();
    Arc::new(DMetricField::diagonal(chart, g, h, n).unwrap())
}

fn coeffs() -> impl Strategy<Value = [f64; 8]> {
    prop::array::uniform8(-0.4f64..0.4)
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 4)
}

fn twistor() -> impl Strategy<Value = TwistorValue> {
    prop::array::uniform8(-1.0f64..1.0)
        .prop_map(|a| TwistorValue::new([C64::new(a[0], a[1]), C64::new(a[2], a[3])], [C64::new(a[4], a[5]), C64::new(a[6], a[7])]))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn jets_agree_with_finite_differences(a in -1.5f64..1.5, b in -1.5f64..1.5, c in -0.5f64..0.5, p in point()) {
        let f = sf(&format!("sin({a}*u1 + {b}*u2) * exp({c}*u3) / (2 + u4^2)"));
        prop_assert!(jet_crosscheck(&f, &p, 3).unwrap() < 1e-5);
    }

    #[test]
    fn jet_exp_log_and_product_rule(p in point()) {
        let u = Jet::variables(&p, 4);
        let f = &(&u[0] * &u[1]).sin() + &(&u[2] * 0.3).exp();
        let pos = &f.exp();
        let back = pos.ln().unwrap();
        prop_assert!((&back - &f).max_abs_coeff() < 1e-10);
        let prod = &f * &u[3];
        let want = f.derivative(&[0]) * p[3];
        prop_assert!((prod.derivative(&[0]) - want).abs() < 1e-12);
    }

    #[test]
    fn adapted_frames_are_dual(c in coeffs(), p in point()) {
        let src = metric(&c);
        let fp = FramePair::from_n(&src.jets(&p, 0).unwrap().n_values(), &p);
        prop_assert!(fp.duality_residual() < 1e-12);
        prop_assert!((&fp.frame * fp.coframe.transpose() - DMatrix::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn canonical_is_metric_with_structural_torsion_zeros(c in coeffs(), p in point()) {
        let src = metric(&c);
        let conn = connection_at(src.as_ref(), ConnectionKind::Canonical, &p, 1).unwrap();
        prop_assert!(conn.nonmetricity() < 1e-10);
        let t = conn.torsion().unwrap();
        let same = |x: usize| x < 2;
        for a in 0..4 {
            for b in 0..4 {
                for g in 0..4 {
                    if same(a) == same(b) && same(b) == same(g) {
                        prop_assert!(t[(a * 4 + b) * 4 + g].value().abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn levi_civita_is_torsion_free(c in coeffs(), p in point()) {
        let src = metric(&c);
        let conn = connection_at(src.as_ref(), ConnectionKind::LeviCivita, &p, 1).unwrap();
        prop_assert!(conn.nonmetricity() < 1e-10);
        prop_assert!(conn.torsion().unwrap().iter().all(|x| x.value().abs() < 1e-10));
    }

    #[test]
    fn distortion_relation_holds(c in coeffs(), p in point()) {
        let src = metric(&c);
        let d = connection_at(src.as_ref(), ConnectionKind::Canonical, &p, 1).unwrap();
        let lc = connection_at(src.as_ref(), ConnectionKind::LeviCivita, &p, 1).unwrap();
        prop_assert!(distortion_curvature_residual(&d, &lc).unwrap() < 1e-8);
    }

    #[test]
    fn weyl_is_traceless_and_conformally_invariant(c in coeffs(), p in point(), a in -0.3f64..0.3, b in -0.2f64..0.2) {
        let src = metric(&c);
        let factor = ConformalFactor::new(sf(&format!("1 + {a}*sin(u1) + {b}*u2*u4")));
        let conn = connection_at(src.as_ref(), ConnectionKind::LeviCivita, &p, 1).unwrap();
        let w = weyl_of(&conn).unwrap();
        prop_assert!(weyl_trace(&w.weyl_lowered, &conn.geo.inverse_values()) < 1e-9);
        let (lowered, mixed) = conformal_invariance_check(src.clone(), &factor, ConnectionKind::LeviCivita, &p).unwrap();
        prop_assert!(mixed < 1e-6, "mixed Weyl {mixed:e}, lowered {lowered:e}");
        let (l, box_term) = lambda_relation(src.clone(), &factor, ConnectionKind::LeviCivita, &p).unwrap();
        prop_assert!((l + box_term).abs() < 1e-6);
        prop_assert!(conformal_psi_residual(src, &factor, ConnectionKind::LeviCivita, &p).unwrap() < 1e-6);
    }

    #[test]
    fn curvature_spinors_rebuild_levi_civita_curvature(c in coeffs(), p in point()) {
        let src = metric(&c);
        let (cs, _, _) = curvature_spinors_at(src.as_ref(), ConnectionKind::LeviCivita, &p).unwrap();
        let pkg = connection_at(src.as_ref(), ConnectionKind::LeviCivita, &p, 1).unwrap().package().unwrap();
        prop_assert!(cs.reconstruction < 1e-7);
        prop_assert!(cs.x_structure < 1e-9 && cs.hermiticity < 1e-9);
        prop_assert!((cs.lambda - pkg.scalar / 24.0).abs() < 1e-9);
    }

    #[test]
    fn spirality_is_conformally_invariant(z in twistor(), c in coeffs(), p in point(), a in -0.3f64..0.3) {
        let src = metric(&c);
        let factor = ConformalFactor::new(sf(&format!("1 + {a}*cos(u2 + u3)")));
        prop_assert!(spirality_conformal_residual(&z, src, &factor, &p).unwrap() < 1e-9);
    }

    #[test]
    fn pairing_is_hermitian(z in twistor(), w in twistor()) {
        let zw = TwistorValue::pairing(&z, &w);
        let wz = TwistorValue::pairing(&w, &z);
        prop_assert!((zw - wz.conj()).norm() < 1e-14);
        prop_assert!((TwistorValue::pairing(&z, &z).re - 2.0 * spirality(&z)).abs() < 1e-12);
    }

    #[test]
    fn transport_is_linear(z in twistor(), w in twistor(), c in coeffs(), p in point()) {
        let src = metric(&c);
        let end: Vec<f64> = p.iter().map(|x| 0.5 * x).collect();
        let line = Cubic::line(&p, &end);
        let (a, b) = (C64::new(0.3, 0.9), C64::new(-1.1, 0.2));
        let t = |v: &TwistorValue| twistor_transport(v, &line, src.as_ref(), ConnectionKind::Canonical, 6).unwrap();
        let (tz, tw, tc) = (t(&z), t(&w), t(&z.combine(a, &w, b)));
        for i in 0..tc.len() {
            prop_assert!(tc[i].max_diff(&tz[i].combine(a, &tw[i], b)) < 1e-12);
        }
    }

    #[test]
    fn adapted_metric_is_block_diagonal(c in coeffs(), p in point()) {
        let src = metric(&c);
        let geo = Adapted::new(&src.jets(&p, 0).unwrap()).unwrap();
        let g = geo.metric_values();
        prop_assert!(g.view((0, 2), (2, 2)).amax() == 0.0);
    }
}
