use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use num_complex::Complex64 as C64;

use nonholo::connections::{connection_at, ConnectionKind};
use nonholo::finsler::hessian_metric;
use nonholo::scenario::load_scenario;
use nonholo::spin::curvature_spinors_at;
use nonholo::twistor::{twistor_curvature, twistor_transport, Cubic, TwistorValue};
use nonholo::Jet;

fn jets(c: &mut Criterion) {
    let p = [0.3, -0.2, 0.7, 0.1, 0.5, 0.9, -0.4, 0.2];
    let u = Jet::variables(&p, 4);
    c.bench_function("jet_mul_8vars_order4", |b| b.iter(|| black_box(&u[0] * &u[1])));
    c.bench_function("jet_sin_8vars_order4", |b| b.iter(|| black_box((&u[2] * &u[3]).sin())));
}

fn connections(c: &mut Criterion) {
    let s = load_scenario("schwarzschild22").unwrap();
    let p = [4.0, 1.1, 0.3, 0.2];
    c.bench_function("levi_civita_q1_schwarzschild22", |b| {
        b.iter(|| black_box(connection_at(s.source.as_ref(), ConnectionKind::LeviCivita, &p, 1).unwrap()))
    });
    c.bench_function("curvature_package_schwarzschild22", |b| {
        b.iter(|| {
            black_box(
                connection_at(s.source.as_ref(), ConnectionKind::LeviCivita, &p, 1)
                    .unwrap()
                    .package()
                    .unwrap(),
            )
        })
    });
    let q = load_scenario("quadratic_schwarzschild44").unwrap();
    let p8 = [4.0, 1.1, 0.3, 0.2, 1.0, 1.2, 0.8, 1.5];
    c.bench_function("cartan_q0_quadratic44", |b| {
        b.iter(|| black_box(connection_at(q.source.as_ref(), ConnectionKind::Cartan, &p8, 0).unwrap()))
    });
    let r = load_scenario("randers_flat").unwrap();
    let ff = r.finsler.clone().unwrap();
    c.bench_function("hessian_randers", |b| {
        b.iter(|| black_box(hessian_metric(&ff, &[0.1, 0.2, 1.0, 1.5]).unwrap()))
    });
}

fn spinors_and_twistors(c: &mut Criterion) {
    let s = load_scenario("schwarzschild22").unwrap();
    let p = [4.0, 1.1, 0.3, 0.2];
    c.bench_function("curvature_spinors_schwarzschild22", |b| {
        b.iter(|| black_box(curvature_spinors_at(s.source.as_ref(), ConnectionKind::LeviCivita, &p).unwrap()))
    });
    let z = TwistorValue::new([C64::new(0.3, 0.1), C64::new(-0.4, 0.2)], [C64::new(0.5, -0.3), C64::new(0.1, 0.7)]);
    let line = Cubic::line(&p, &[5.0, 1.4, 0.8, 0.6]);
    c.bench_function("twistor_transport_16_steps", |b| {
        b.iter(|| black_box(twistor_transport(&z, &line, s.source.as_ref(), ConnectionKind::LeviCivita, 16).unwrap()))
    });
    c.bench_function("twistor_curvature_schwarzschild22", |b| {
        b.iter(|| {
            black_box(
                twistor_curvature(
                    s.source.as_ref(),
                    ConnectionKind::LeviCivita,
                    &[1.0, 0.0, 0.0, 0.0],
                    &[0.0, 0.0, 0.0, 1.0],
                    &p,
                )
                .unwrap(),
            )
        })
    });
}

criterion_group!(benches, jets, connections, spinors_and_twistors);
criterion_main!(benches);
