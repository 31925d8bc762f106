use std::f64::consts::{E, PI};

use proptest::prelude::*;
use raystab::flow::{
    flow_map, integrate_ray, inverse_flow, monitor_invariants, scale_xi_check, IntegratorConfig,
    RaySeed,
};
use raystab::{FieldSpec, Vec3};

fn unit(v: [f64; 3]) -> Vec3 {
    Vec3::from(v).normalize()
}

/// Unit seed with `b0 ⊥ ξ0` and `b̃0 = ξ0 × b0`, built from raw draws.
fn admissible(x0: [f64; 3], xi: [f64; 3], b: [f64; 3]) -> RaySeed {
    let xi0 = unit(xi);
    let b = Vec3::from(b);
    let b0 = (b - xi0 * xi0.dot(&b)).normalize();
    RaySeed::framed(Vec3::from(x0), xi0, b0)
}

fn direction() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-1.0..1.0f64)
        .prop_filter("away from zero", |v| Vec3::from(*v).norm() > 0.2)
}

fn b_direction() -> impl Strategy<Value = ([f64; 3], [f64; 3])> {
    (direction(), direction()).prop_filter("b not parallel to xi", |(x, b)| {
        Vec3::from(*x)
            .normalize()
            .cross(&Vec3::from(*b).normalize())
            .norm()
            > 0.2
    })
}

fn torus_point() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(0.0..2.0 * PI)
}

#[test]
fn spec_ray_examples() {
    let cfg = IntegratorConfig::default();
    let strain = FieldSpec::strain([-1.0, 0.0, 1.0]).unwrap();
    let seed = RaySeed::new(Vec3::repeat(1.0), Vec3::z(), Vec3::x());
    let last = *integrate_ray(&strain, &seed, 1.0, &cfg).unwrap().last();
    assert!((last.b.norm() - E).abs() <= 1e-9);
    assert!((last.xi - Vec3::z() / E).norm() <= 1e-9);

    let shear = FieldSpec::shear(1.0);
    let seed = RaySeed::new(Vec3::zeros(), Vec3::z(), Vec3::y());
    let last = *integrate_ray(&shear, &seed, 3.0, &cfg).unwrap().last();
    assert!((last.b - Vec3::new(-3.0, 1.0, 0.0)).norm() <= 1e-8);
    assert!((last.b.norm() - 10f64.sqrt()).abs() <= 1e-8);
}

#[test]
fn inverse_flow_strain_closed_form() {
    let cfg = IntegratorConfig::default();
    let strain = FieldSpec::strain([-1.0, 0.0, 1.0]).unwrap();
    let x = inverse_flow(&strain, &Vec3::new(1.0 / E, 1.0, E), 1.0, &cfg).unwrap();
    assert!((x - Vec3::repeat(1.0)).norm() <= 1e-9);
}

#[test]
fn abc_drift_and_scale_examples() {
    let cfg = IntegratorConfig::default();
    let abc = FieldSpec::abc(1.0, 1.0, 1.0);
    let seed = admissible([0.3, 1.7, 4.1], [0.2, -0.5, 0.8], [1.0, 0.3, 0.1]);
    let ledger = monitor_invariants(&integrate_ray(&abc, &seed, 10.0, &cfg).unwrap());
    assert!(ledger.max_rel() <= 1e-8, "{ledger:?}");
    let r = scale_xi_check(&abc, &seed, 1e3, 10.0, &cfg).unwrap();
    assert!(r.max_b_deviation <= 1e-8, "{r:?}");
}

fn strain_b_error(cfg: &IntegratorConfig) -> f64 {
    let strain = FieldSpec::strain([-1.0, 0.0, 1.0]).unwrap();
    let seed = RaySeed::new(Vec3::repeat(1.0), Vec3::z(), Vec3::x());
    let last = *integrate_ray(&strain, &seed, 1.0, cfg).unwrap().last();
    (last.b.norm() - E).abs()
}

#[test]
fn default_integrator_order_on_strain_oracle() {
    // loose tolerances so every step is accepted at exactly max_step
    let fixed = |h: f64| IntegratorConfig {
        rtol: 1.0,
        atol: 1.0,
        max_step: Some(h),
        initial_step: Some(h),
        ..IntegratorConfig::default()
    };
    let order = (strain_b_error(&fixed(0.2)) / strain_b_error(&fixed(0.1))).log2();
    assert!(order >= 4.0, "measured order {order}");
}

#[test]
fn rk4_converges_at_fourth_order() {
    // e^h − (1 + h + h²/2 + h³/6 + h⁴/24) approaches its h⁵ asymptote from
    // below, so the measured order tends to 4 from below
    let e1 = strain_b_error(&IntegratorConfig::rk4(0.1));
    let e2 = strain_b_error(&IntegratorConfig::rk4(0.05));
    let e3 = strain_b_error(&IntegratorConfig::rk4(0.025));
    let (o1, o2) = ((e1 / e2).log2(), (e2 / e3).log2());
    assert!(o1 >= 3.9 && o2 >= 3.9 && o2 > o1 && o2 < 4.0, "{o1} {o2}");
}

#[test]
fn tighter_tolerance_reduces_oracle_error() {
    let strain = FieldSpec::strain([-1.0, 0.0, 1.0]).unwrap();
    let seed = RaySeed::new(Vec3::repeat(1.0), Vec3::z(), Vec3::x());
    let err = |tol: f64| {
        let cfg = IntegratorConfig {
            max_step: Some(5.0),
            ..IntegratorConfig::with_tolerance(tol, tol)
        };
        let last = *integrate_ray(&strain, &seed, 5.0, &cfg).unwrap().last();
        (last.b.norm() - 5f64.exp()).abs()
    };
    let errs: Vec<f64> = [1e-4, 1e-5, 1e-6, 1e-7].map(err).to_vec();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn invariants_conserved_on_trig_poly(
        field_seed in 0u64..10_000,
        x0 in torus_point(),
        (xi, b) in b_direction(),
    ) {
        let spec = FieldSpec::random_trig_poly(field_seed, 3, 2, 0.5);
        let seed = admissible(x0, xi, b);
        let traj = integrate_ray(&spec, &seed, 10.0, &IntegratorConfig::default()).unwrap();
        let ledger = monitor_invariants(&traj);
        prop_assert!(ledger.max_rel() <= 1e-8, "{:?}", ledger);
    }

    #[test]
    fn amplitude_is_linear_in_b(
        field_seed in 0u64..10_000,
        x0 in torus_point(),
        xi in direction(),
        (p, q) in (direction(), direction()),
        (alpha, beta) in (-2.0..2.0f64, -2.0..2.0f64),
    ) {
        let spec = FieldSpec::random_trig_poly(field_seed, 2, 2, 0.5);
        let xi0 = unit(xi);
        let perp = |v: [f64; 3]| { let v = Vec3::from(v); v - xi0 * xi0.dot(&v) };
        let (b1, b2) = (perp(p), perp(q));
        let cfg = IntegratorConfig::default();
        let x0 = Vec3::from(x0);
        let run = |b: Vec3| integrate_ray(&spec, &RaySeed::new(x0, xi0, b), 5.0, &cfg).unwrap().last().b;
        let combo = run(b1 * alpha + b2 * beta);
        let parts = run(b1) * alpha + run(b2) * beta;
        prop_assert!((combo - parts).norm() <= 1e-8 * parts.norm().max(1.0));
    }

    #[test]
    fn xi_homogeneity(
        x0 in torus_point(),
        (xi, b) in b_direction(),
        c in prop_oneof![-1000.0..-0.1f64, 0.1..1000.0f64],
    ) {
        let spec = FieldSpec::abc(1.0, 0.8, 0.6);
        let seed = admissible(x0, xi, b);
        let r = scale_xi_check(&spec, &seed, c, 5.0, &IntegratorConfig::default()).unwrap();
        prop_assert!(r.max_b_deviation <= 1e-8, "{:?}", r);
        prop_assert!(r.max_xi_rel_deviation <= 1e-8, "{:?}", r);
    }

    #[test]
    fn backward_forward_roundtrip(
        field_seed in 0u64..10_000,
        x0 in torus_point(),
        t in 0.1..3.0f64,
    ) {
        let spec = FieldSpec::random_trig_poly(field_seed, 3, 2, 0.5);
        let cfg = IntegratorConfig::default();
        let x0 = Vec3::from(x0);
        let xt = flow_map(&spec, &x0, 0.0, t, &cfg).unwrap();
        let back = inverse_flow(&spec, &xt, t, &cfg).unwrap();
        let tol = 10.0 * (cfg.atol + cfg.rtol * x0.norm());
        prop_assert!((back - x0).norm() <= tol, "{:e} > {:e}", (back - x0).norm(), tol);
    }

    #[test]
    fn rotation_preserves_amplitude(
        x0 in prop::array::uniform3(-2.0..2.0f64),
        (xi, b) in b_direction(),
    ) {
        let seed = admissible(x0, xi, b);
        let traj = integrate_ray(&FieldSpec::rotation(), &seed, 2.0 * PI, &IntegratorConfig::default()).unwrap();
        for s in &traj.states {
            prop_assert!((s.b.norm() - 1.0).abs() <= 1e-9);
        }
    }
}
