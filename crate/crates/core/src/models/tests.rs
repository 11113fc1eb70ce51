use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn torus2() -> FlowModel {
    FlowModel::torus(Lattice::cubic(2, 2.0 * PI).unwrap())
}

fn torus3_skew() -> FlowModel {
    FlowModel::torus(Lattice::new(&[vec![2.0, 0.0, 0.0], vec![0.7, 2.5, 0.0], vec![0.3, -0.4, 3.0]]).unwrap())
}

fn cat() -> FlowModel {
    FlowModel::cat_map([[2, 1], [1, 1]], 1.0).unwrap()
}

fn spheroid() -> FlowModel {
    FlowModel::surface(&ProfileSpec::spheroid(1.0, 2.0)).unwrap()
}

fn surface_of(m: &FlowModel) -> &SurfaceModel {
    match m.kind() {
        ModelKind::SurfaceOfRevolution(s) => s,
        _ => unreachable!(),
    }
}

fn all_models() -> Vec<FlowModel> {
    vec![torus2(), torus3_skew(), cat(), FlowModel::sphere3(), spheroid()]
}

#[test]
fn torus_closed_orbit() {
    let m = torus2();
    let s = PhaseState::new(&[0.0, 0.0], &[1.0, 0.0], 1.0);
    let e = m.flow(&s, 2.0 * PI).unwrap();
    assert!(m.distance(&s, &e) < 1e-12);
    assert_eq!(e.momentum(), s.momentum());
}

#[test]
fn torus_wraparound_distance() {
    let m = torus2();
    let a = PhaseState::new(&[0.0, 0.0], &[1.0, 0.0], 1.0);
    let b = PhaseState::new(&[2.0 * PI - 0.1, 0.0], &[1.0, 0.0], 1.0);
    assert_abs_diff_eq!(m.distance(&a, &b), 0.1, epsilon = 1e-12);
}

#[test]
fn torus_tangent_flow_is_shear() {
    let m = torus2();
    let s = m.liouville_sample(&mut ChaCha8Rng::seed_from_u64(1));
    let j = m.tangent_flow(&s, 10.0).unwrap();
    assert_eq!(j[(1, 2)], 10.0);
    let j2 = m.tangent_flow(&s, 20.0).unwrap();
    assert!(j2.norm() > 1.9 * j.norm() - 1.0);
}

#[test]
fn descriptors() {
    let d: ModelDescriptor =
        serde_json::from_str(r#"{"kind":"torus","n":2,"basis":[[6.2831853,0],[0,6.2831853]]}"#).unwrap();
    let m = FlowModel::from_descriptor(&d).unwrap();
    assert_abs_diff_eq!(m.shortest_period(), 2.0 * PI, epsilon = 1e-12);
    assert_abs_diff_eq!(m.level_volume(), 8.0 * PI.powi(3), epsilon = 1e-9);
    assert_eq!(m.level_dim(), 3);
    let d: ModelDescriptor = serde_json::from_str(r#"{"kind":"catmap","matrix":[[2,1],[1,1]],"roof":1.0}"#).unwrap();
    assert_eq!(FlowModel::from_descriptor(&d).unwrap().shortest_period(), 1.0);
    let d: ModelDescriptor = serde_json::from_str(r#"{"kind":"sphere3","T0":3.0}"#).unwrap();
    assert_eq!(FlowModel::from_descriptor(&d).unwrap().shortest_period(), 3.0);
    let d: ModelDescriptor = serde_json::from_str(r#"{"kind":"surfrev","profile":{"preset":"sphere"}}"#).unwrap();
    let m = FlowModel::from_descriptor(&d).unwrap();
    assert_abs_diff_eq!(m.shortest_period(), 2.0 * PI, epsilon = 1e-9);
    assert_abs_diff_eq!(m.level_volume(), 8.0 * PI * PI, epsilon = 1e-8);
}

#[test]
fn invalid_models() {
    assert!(FlowModel::cat_map([[1, 1], [0, 1]], 1.0).is_err());
    assert!(FlowModel::cat_map([[2, 1], [1, 2]], 1.0).is_err());
    assert!(FlowModel::cat_map([[2, 1], [1, 1]], 0.0).is_err());
    assert!(Lattice::new(&[vec![1.0, 2.0], vec![2.0, 4.0]]).is_err());
    assert!(torus2().with_shortest_period(-1.0).is_err());
}

#[test]
fn cat_map_fixed_point() {
    let m = cat();
    let s = PhaseState::new(&[0.0, 0.0, 0.0], &[], 1.0);
    let e = m.flow(&s, 5.0).unwrap();
    assert_eq!(e.position(), &[0.0, 0.0, 0.0]);
}

/// Independent oracle: A applied n times with i128 arithmetic to a dyadic
/// rational `p/2^k`, reduced exactly.
fn dyadic_orbit(a: [[i64; 2]; 2], p: [i128; 2], k: u32, n: usize) -> [f64; 2] {
    let modulus = 1i128 << k;
    let mut v = p;
    for _ in 0..n {
        v = [
            (a[0][0] as i128 * v[0] + a[0][1] as i128 * v[1]).rem_euclid(modulus),
            (a[1][0] as i128 * v[0] + a[1][1] as i128 * v[1]).rem_euclid(modulus),
        ];
    }
    [v[0] as f64 / modulus as f64, v[1] as f64 / modulus as f64]
}

#[test]
fn cat_map_exact_at_integer_times() {
    let m = cat();
    let k = 52;
    let p = [
        3_141_592_653_589_793i128 % (1 << k),
        2_718_281_828_459_045i128 % (1 << k),
    ];
    let u = [p[0] as f64 / (1u64 << k) as f64, p[1] as f64 / (1u64 << k) as f64];
    let s = PhaseState::new(&[u[0], u[1], 0.0], &[], 1.0);
    for n in [1usize, 2, 7, 20, 40] {
        let e = m.flow(&s, n as f64).unwrap();
        let oracle = dyadic_orbit([[2, 1], [1, 1]], p, k, n);
        assert_eq!(&e.position()[..2], &oracle, "n = {n}");
        assert_eq!(e.position()[2], 0.0);
        let j = m.tangent_flow(&s, n as f64).unwrap();
        let mut a = [[1i128, 0], [0, 1]];
        for _ in 0..n {
            a = [
                [2 * a[0][0] + a[1][0], 2 * a[0][1] + a[1][1]],
                [a[0][0] + a[1][0], a[0][1] + a[1][1]],
            ];
        }
        for r in 0..2 {
            for c in 0..2 {
                assert_eq!(j[(r, c)], a[r][c] as f64);
            }
        }
    }
}

#[test]
fn frac_mul_matches_exact_rational() {
    use super::catmap::frac_mul;
    // u = 5/8 exactly, a = 13 → 65/8 mod 1 = 1/8.
    assert_eq!(frac_mul(13, 0.625), 0.125);
    assert_eq!(frac_mul(-3, 0.25), 0.25);
    let big = 1i128 << 80;
    assert_eq!(frac_mul(big + 1, 0.5), 0.5);
}

#[test]
fn sphere3_periodic() {
    let m = FlowModel::sphere3();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let s = m.liouville_sample(&mut rng);
        let e = m.flow(&s, 2.0 * PI).unwrap();
        assert!(m.distance(&s, &e) < 1e-12);
        let e = m.flow(&s, 6.0 * PI).unwrap();
        assert!(m.distance(&s, &e) < 1e-12);
    }
}

#[test]
fn sphere3_antipodal_distance() {
    let m = FlowModel::sphere3();
    let a = PhaseState::new(&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], 1.0);
    let b = m.flow(&a, PI).unwrap();
    // The direction is transported along the great circle, reversing it.
    assert_abs_diff_eq!(sphere3::angle(a.position(), b.position()), PI, epsilon = 1e-12);
    let c = PhaseState::new(&[-1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], 1.0);
    assert_abs_diff_eq!(m.distance(&a, &c), PI, epsilon = 1e-12);
}

/// Fixed-step RK4 on Hamilton's equations in the `(z, φ)` chart, as an
/// independent reference for the ambient integrator.
fn chart_reference(z0: f64, alpha: f64, t: f64, steps: usize) -> [f64; 3] {
    let rho = |z: f64| (1.0 - z * z / 4.0).sqrt();
    let d1 = |z: f64| -z / (4.0 * rho(z));
    let d2 = |z: f64| {
        let r = rho(z);
        -1.0 / (4.0 * r) - z * z / (16.0 * r * r * r)
    };
    let xi_phi = rho(z0) * alpha.cos();
    let f = |y: [f64; 3]| {
        let (z, xz) = (y[0], y[2]);
        let (r, r1, r2) = (rho(z), d1(z), d2(z));
        let g = 1.0 + r1 * r1;
        [
            xz / g,
            xi_phi / (r * r),
            xz * xz * r1 * r2 / (g * g) + xi_phi * xi_phi * r1 / r.powi(3),
        ]
    };
    let d = 1.0 + d1(z0).powi(2);
    let mut y = [z0, 0.0, d * alpha.sin() / d.sqrt()];
    let h = t / steps as f64;
    for _ in 0..steps {
        let k1 = f(y);
        let k2 = f(std::array::from_fn(|i| y[i] + 0.5 * h * k1[i]));
        let k3 = f(std::array::from_fn(|i| y[i] + 0.5 * h * k2[i]));
        let k4 = f(std::array::from_fn(|i| y[i] + h * k3[i]));
        y = std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    y
}

#[test]
fn spheroid_clairaut_conservation() {
    let m = spheroid();
    let sm = surface_of(&m);
    let s = sm.state_at(0.0, 0.0, PI / 3.0);
    assert_abs_diff_eq!(sm.clairaut(&s), 0.5, epsilon = 1e-15);
    let e = m.flow(&s, 50.0).unwrap();
    assert_abs_diff_eq!(sm.clairaut(&e), 0.5, epsilon = 1e-8);
    let reference = chart_reference(0.0, PI / 3.0, 50.0, 200_000);
    let chart = sm.chart(&e);
    assert_abs_diff_eq!(chart[0], reference[0], epsilon = 1e-7);
    let dphi = (chart[1] - reference[1]).rem_euclid(2.0 * PI);
    assert!(dphi.min(2.0 * PI - dphi) < 1e-7, "{dphi}");
    let mut t = 0.0;
    let mut st = s;
    while t < 100.0 {
        st = m.flow(&st, 10.0).unwrap();
        t += 10.0;
        assert!((sm.clairaut(&st) - 0.5).abs() < 1e-8);
    }
}

#[test]
fn surface_through_pole() {
    let m = spheroid();
    let sm = surface_of(&m);
    // A meridian geodesic passes over both poles and returns after one full
    // meridian length.
    let s = sm.state_at(0.0, 0.0, PI / 2.0);
    // Quarter meridian, with z = 2 sin θ: 2∫√(1 − ¾ sin²θ) dθ over [0, π/2].
    let quarter = crate::quad::integrate(
        |t: f64| 2.0 * (1.0 - 0.75 * t.sin().powi(2)).sqrt(),
        0.0,
        PI / 2.0,
        1e-14,
        1e-14,
    )
    .unwrap();
    let e = m.flow(&s, 4.0 * quarter).unwrap();
    assert!(m.distance(&s, &e) < 1e-7, "{}", m.distance(&s, &e));
}

#[test]
fn surface_tangent_flow_matches_finite_differences() {
    let m = spheroid();
    let sm = surface_of(&m);
    let s = sm.state_at(0.3, 0.2, 0.9);
    let t = 3.0;
    let (_, phi) = sm.flow_with_variation(&s, t).unwrap();
    let h = 1e-6;
    for (z, alpha, col) in [(h, 0.0, None), (0.0, h, Some(()))] {
        let a = sm.state_at(0.3 + z, 0.2, 0.9 + alpha);
        let b = sm.state_at(0.3 - z, 0.2, 0.9 - alpha);
        let fa = m.flow(&a, t).unwrap();
        let fb = m.flow(&b, t).unwrap();
        let mut d0 = [0.0; 6];
        let mut d1 = [0.0; 6];
        for i in 0..3 {
            d0[i] = (a.position()[i] - b.position()[i]) / (2.0 * h);
            d0[3 + i] = (a.momentum()[i] - b.momentum()[i]) / (2.0 * h);
            d1[i] = (fa.position()[i] - fb.position()[i]) / (2.0 * h);
            d1[3 + i] = (fa.momentum()[i] - fb.momentum()[i]) / (2.0 * h);
        }
        let pred = phi * nalgebra::Vector6::from_column_slice(&d0);
        for i in 0..6 {
            assert!((pred[i] - d1[i]).abs() < 1e-5, "{col:?} {i}: {} vs {}", pred[i], d1[i]);
        }
    }
}

#[test]
fn torus_sample_mean() {
    let m = torus2();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 1_000_000;
    let mut sum = [0.0; 2];
    for _ in 0..n {
        let s = m.liouville_sample(&mut rng);
        sum[0] += s.position()[0];
        sum[1] += s.position()[1];
    }
    let sigma = 2.0 * PI / 12f64.sqrt() / (n as f64).sqrt();
    for v in sum {
        assert!((v / n as f64 - PI).abs() < 3.0 * sigma);
    }
}

#[test]
fn sphere3_direction_mean() {
    let m = FlowModel::sphere3();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 200_000;
    let mut sum = [0.0; 4];
    for _ in 0..n {
        let s = m.liouville_sample(&mut rng);
        for i in 0..4 {
            sum[i] += s.momentum()[i];
        }
        assert!(
            s.position()
                .iter()
                .zip(s.momentum())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .abs()
                < 1e-12
        );
    }
    // Each component has variance 1/4.
    let sigma = 0.5 / (n as f64).sqrt();
    for v in sum {
        assert!((v / n as f64).abs() < 3.0 * sigma);
    }
}

#[test]
fn spheroid_band_area_fraction() {
    let m = spheroid();
    // Oracle: 2πρ√(1+ρ′²) = 2π√(1 − 3z²/16) for a = 1, c = 2, by Simpson.
    let simpson = |a: f64, b: f64| {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let f = |z: f64| (1.0 - 3.0 * z * z / 16.0).sqrt();
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let p = simpson(-0.5, 0.5) / simpson(-2.0, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 200_000;
    let hits = (0..n)
        .filter(|_| m.liouville_sample(&mut rng).position()[2].abs() < 0.5)
        .count();
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!((hits as f64 / n as f64 - p).abs() < 3.0 * sigma);
}

#[test]
fn tangent_flow_identity_at_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for m in all_models() {
        let s = m.liouville_sample(&mut rng);
        let j = m.tangent_flow(&s, 0.0).unwrap();
        let id = DMatrix::<f64>::identity(m.level_dim(), m.level_dim());
        assert!((j - id).norm() < 1e-12, "{}", m.label());
    }
}

#[test]
fn window_plans_cover_returns() {
    let m = torus2();
    let s = PhaseState::new(&[1.0, 2.0], &[1.0, 0.0], 1.0);
    let w = m.window_plan(10.0, 0.1).windows(&s, PI, 10.0, 0.1);
    assert_eq!(w.len(), 1);
    assert!(w[0].0 <= 2.0 * PI && 2.0 * PI <= w[0].1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn group_property(seed in 0u64..1000, t in 0.0f64..10.0, u in 0.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for m in all_models() {
            let s = m.liouville_sample(&mut rng);
            let a = m.flow(&s, t + u).unwrap();
            let b = m.flow(&m.flow(&s, t).unwrap(), u).unwrap();
            prop_assert!(m.distance(&a, &b) <= 1e-7, "{}: {}", m.label(), m.distance(&a, &b));
        }
    }

    #[test]
    fn volume_preservation(seed in 0u64..1000, t in 0.0f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for m in all_models() {
            let s = m.liouville_sample(&mut rng);
            let j = m.tangent_flow(&s, t).unwrap();
            let det = if let ModelKind::CatMapSuspension(_) = m.kind() {
                // Entries are exact integers beyond the range where a
                // floating determinant is accurate.
                let e = |r, c| j[(r, c)] as i128;
                ((e(0, 0) * e(1, 1) - e(0, 1) * e(1, 0)) * e(2, 2)) as f64
            } else {
                j.determinant()
            };
            prop_assert!((det - 1.0).abs() <= 1e-6, "{}: {}", m.label(), det);
        }
    }

    #[test]
    fn energy_conservation(seed in 0u64..1000, t in 0.0f64..30.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for m in all_models() {
            let s = m.liouville_sample(&mut rng);
            let e = m.flow(&s, t).unwrap();
            let h0 = m.hamiltonian(&s);
            prop_assert!((m.hamiltonian(&e) - h0).abs() / h0 <= 1e-8 * t.max(1.0));
            prop_assert!((h0 - s.energy).abs() <= 1e-9 * s.energy);
        }
    }

    #[test]
    fn distance_is_a_metric(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for m in all_models() {
            let a = m.liouville_sample(&mut rng);
            let b = m.liouville_sample(&mut rng);
            let c = m.liouville_sample(&mut rng);
            prop_assert_eq!(m.distance(&a, &a), 0.0);
            prop_assert_eq!(m.distance(&a, &b), m.distance(&b, &a));
            prop_assert!(m.distance(&a, &c) <= m.distance(&a, &b) + m.distance(&b, &c) + 1e-12);
            prop_assert!(m.distance(&a, &b) <= m.diameter_bound());
        }
    }

    #[test]
    fn speed_bound_holds(seed in 0u64..1000, t in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for m in all_models() {
            let s = m.liouville_sample(&mut rng);
            let a = m.flow(&s, t).unwrap();
            let b = m.flow(&s, t + 1e-3).unwrap();
            prop_assert!(m.distance(&a, &b) <= m.speed_bound() * 1e-3 * (1.0 + 1e-6), "{}", m.label());
        }
    }

    #[test]
    fn states_stay_in_fundamental_domain(seed in 0u64..1000, t in -20.0f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = cat();
        let s = m.flow(&m.liouville_sample(&mut rng), t).unwrap();
        let p = s.position();
        prop_assert!((0.0..1.0).contains(&p[0]) && (0.0..1.0).contains(&p[1]) && (0.0..1.0).contains(&p[2]));
        let m = torus3_skew();
        let s = m.flow(&m.liouville_sample(&mut rng), t).unwrap();
        let ModelKind::FlatTorus(tt) = m.kind() else { unreachable!() };
        let c = tt.lattice().coords(s.position());
        prop_assert!(c.iter().all(|x| (-1e-12..1.0 + 1e-12).contains(x)));
    }
}
