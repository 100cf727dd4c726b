//! The library against the independent reference computations in `common`.

mod common;

use nonholo::connections::{connection_at, ConnectionKind};
use nonholo::finsler::solve_finsler_vierbein;
use nonholo::scenario::{load_scenario, Lcg};
use nonholo::spin::curvature_spinors_at;

#[test]
fn levi_civita_matches_fd_christoffel() {
    let s = load_scenario("schwarzschild22").unwrap();
    for p in s.sample_points(11, 6) {
        let w = common::christoffel_deviation(s.source.as_ref(), &p);
        assert!(w < 1e-8, "Γ mismatch {w:e} at {p:?}");
    }
}

#[test]
fn curvature_matches_fd_riemann() {
    let s = load_scenario("schwarzschild22").unwrap();
    for p in s.sample_points(12, 3) {
        let w = common::riemann_deviation(s.source.as_ref(), &p);
        assert!(w < 1e-6, "Riemann mismatch {w:e} at {p:?}");
    }
}

#[test]
fn adapted_scalar_curvature_matches_coordinate_oracle() {
    // N ≠ 0: the adapted-frame computation and the coordinate finite
    // differences share nothing but the metric.
    let s = load_scenario("conformally_flat_nonholonomic").unwrap();
    let src = s.source.as_ref();
    for p in s.sample_points(13, 3) {
        let pkg = connection_at(src, ConnectionKind::LeviCivita, &p, 1).unwrap().package().unwrap();
        let sr = common::fd_scalar_curvature(src, &p);
        assert!((sr - pkg.scalar).abs() < 1e-6, "sR {} vs {}", sr, pkg.scalar);
    }
}

#[test]
fn vierbein_matches_congruence_oracle() {
    let mut rng = Lcg::new(99);
    for neg in [0, 1, 2] {
        for _ in 0..5 {
            let g = common::random_symmetric(&mut rng, neg);
            let f = common::random_symmetric(&mut rng, neg);
            let eo = common::oracle_vierbein(&g, &f);
            assert!((eo.transpose() * &f * &eo - &g).amax() < 1e-9);
            let es = solve_finsler_vierbein(&g, &f).unwrap();
            assert!((es.transpose() * &f * &es - &g).amax() < 1e-9);
            // the two solutions differ by an isometry of G
            let m = eo.clone().try_inverse().unwrap() * &es;
            assert!((m.transpose() * &g * &m - &g).amax() < 1e-8);
        }
    }
}

#[test]
fn loop_holonomy_matches_curvature() {
    let s = load_scenario("schwarzschild22").unwrap();
    let (err, scale) = common::loop_holonomy_deviation(
        s.source.as_ref(),
        &[4.0, 1.2, 0.3, 0.1],
        &[0.3, -0.7, 0.4, 0.2],
        &[0.5, 0.2, -0.6, 0.8],
        &[1.0, -0.5, 0.25, 0.7],
    );
    assert!(scale > 1e-3, "test loop must see curvature");
    assert!(err < 1e-5 * (1.0 + scale), "holonomy defect vs −R(t,u)v: {err:e}");
}

#[test]
fn schwarzschild_weyl_spinor_is_type_d() {
    let s = load_scenario("schwarzschild22").unwrap();
    for p in s.sample_points(14, 5) {
        let (cs, _, _) = curvature_spinors_at(s.source.as_ref(), ConnectionKind::LeviCivita, &p).unwrap();
        let (i_inv, j_inv) = common::weyl_spinor_invariants(&cs.psi);
        // principal dyad: only Ψ₂ = −M/r³, so I = 6Ψ₂², J = −6Ψ₂³
        let psi2 = -1.0 / p[0].powi(3);
        assert!(
            (i_inv - 6.0 * psi2 * psi2).norm() < 1e-9 * (1.0 + i_inv.norm()),
            "I = {i_inv} at r = {}",
            p[0]
        );
        assert!((j_inv.re.abs() - 6.0 * psi2.abs().powi(3)).abs() < 1e-9, "J = {j_inv}");
        assert!((i_inv.powi(3) - 6.0 * j_inv * j_inv).norm() < 1e-9 * i_inv.norm().powi(3));
    }
}
