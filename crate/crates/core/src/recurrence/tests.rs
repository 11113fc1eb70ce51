use std::f64::consts::{PI, TAU};

use proptest::prelude::*;

use super::*;
use crate::lattice::Lattice;

fn torus2() -> FlowModel {
    FlowModel::torus(Lattice::cubic(2, 2.0 * PI).unwrap())
}

fn catmap() -> FlowModel {
    FlowModel::cat_map([[2, 1], [1, 1]], 1.0).unwrap()
}

fn state(x: [f64; 2], v: [f64; 2]) -> PhaseState {
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    PhaseState::new(&x, &[v[0] / n, v[1] / n], 1.0)
}

#[test]
fn periodic_direction_returns_at_its_period() {
    let m = torus2();
    let s = state([1.0, 2.0], [1.0, 0.0]);
    let spec = RecurrenceSpec::new(&m, 2.0 * PI + 0.1, 0.01);
    let w = is_recurrent(&m, &s, &spec).unwrap().expect("recurrent");
    assert!((w - 2.0 * PI).abs() < 1e-6, "{w}");
}

/// Closest approach of the line `t·v` to the lattice point `2π(q, p)` over
/// `t ∈ [a, b]`.
fn approach(v: [f64; 2], q: i64, p: i64, a: f64, b: f64) -> f64 {
    let l = [2.0 * PI * q as f64, 2.0 * PI * p as f64];
    let t = (l[0] * v[0] + l[1] * v[1]).clamp(a, b);
    ((t * v[0] - l[0]).powi(2) + (t * v[1] - l[1]).powi(2)).sqrt()
}

#[test]
fn golden_direction_does_not_return() {
    let gamma = (1.0 + 5f64.sqrt()) / 2.0;
    let n = (1.0 + gamma * gamma).sqrt();
    let v = [1.0 / n, gamma / n];
    // Oracle: the convergents p/q of γ are the best approximations, so the
    // closest approaches of t·v to 2πℤ² come from the vectors 2π(q, p).
    let (mut p0, mut q0, mut p1, mut q1) = (1i64, 0i64, 1i64, 1i64);
    let mut best = f64::INFINITY;
    while 2.0 * PI * (q1 as f64) < 10.0 + 1.0 {
        best = best.min(approach(v, q1, p1, PI, 10.0));
        let (p2, q2) = (p1 + p0, q1 + q0);
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
    }
    // Every other lattice vector in reach is no closer.
    for q in -3..=3 {
        for p in -3..=3 {
            if (p, q) != (0, 0) {
                assert!(approach(v, q, p, PI, 10.0) >= best - 1e-12);
            }
        }
    }
    assert!(best > 1e-4, "{best}");
    let m = torus2();
    let spec = RecurrenceSpec::new(&m, 10.0, 1e-4);
    assert_eq!(is_recurrent(&m, &state([0.3, 0.4], v), &spec).unwrap(), None);
}

#[test]
fn empty_window_is_rejected() {
    let m = torus2();
    let spec = RecurrenceSpec::new(&m, PI, 0.1);
    assert!(is_recurrent(&m, &state([0.0, 0.0], [1.0, 0.0]), &spec).is_err());
    let spec = RecurrenceSpec::new(&m, 1.0, 0.1);
    assert!(recurrence_volume(&m, &spec, 1000, 1).is_err());
    let spec = RecurrenceSpec::new(&m, 10.0, 0.1);
    assert!(recurrence_volume(&m, &spec, 999, 1).is_err());
}

#[test]
fn huge_radius_gives_full_volume() {
    let m = torus2();
    let spec = RecurrenceSpec::new(&m, 5.0, m.diameter_bound() + 0.1);
    let e = recurrence_volume(&m, &spec, 1000, 3).unwrap();
    assert_eq!(e.hits, 1000);
    assert_eq!(e.volume, m.level_volume());
    assert!(e.ci_high <= m.level_volume() && e.ci_low <= e.volume);
}

#[test]
fn no_returns_before_the_period() {
    let m = torus2();
    let spec = RecurrenceSpec::new(&m, 5.0, 0.05);
    let e = recurrence_volume(&m, &spec, 2000, 3).unwrap();
    assert_eq!(e.volume, 0.0);
    assert_eq!(e.ci_low, 0.0);
    let c = catmap();
    let spec = RecurrenceSpec::new(&c, 0.9, 0.01);
    assert_eq!(recurrence_volume(&c, &spec, 2000, 3).unwrap().hits, 0);
}

#[test]
fn catmap_estimate_is_reproducible_and_resolved() {
    let m = catmap();
    let spec = RecurrenceSpec::new(&m, 6.0, 0.05);
    let a = recurrence_volume(&m, &spec, 100_000, 42).unwrap();
    let b = recurrence_volume(&m, &spec, 100_000, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.failed_samples, 0);
    assert!(a.hits > 0);
    // Oracle: the same samples scanned ten times more finely.
    let fine = recurrence_volume(&m, &spec.with_lipschitz(10.0), 100_000, 42).unwrap();
    assert!(
        (fine.volume - a.volume).abs() < a.ci_high - a.ci_low,
        "{} vs {}",
        fine.volume,
        a.volume
    );
}

#[test]
fn surrogate_volumes() {
    let m = torus2();
    let spec = RecurrenceSpec::new(&m, 20.0, 0.05);
    let base = recurrence_volume(&m, &spec, 5000, 9).unwrap();
    let k1 = extended_volume(&m, &spec.with_surrogate_factor(1.0), 5000, 9).unwrap();
    assert_eq!(base.volume, k1.volume);
    let k2 = extended_volume(&m, &spec, 5000, 9).unwrap();
    assert!(k2.volume >= base.volume);
    assert!(RecurrenceSpec::new(&m, 20.0, 0.05)
        .with_surrogate_factor(0.5)
        .validate()
        .is_err());

    // Brute force over one sample set: doubling ε on the suspension gains at
    // most the factor 2³ of the ε³ law, up to sampling noise.
    let c = catmap();
    for t in [2.0, 4.0, 6.0] {
        let spec = RecurrenceSpec::new(&c, t, 0.02);
        let one = recurrence_volume(&c, &spec, 20_000, 5).unwrap();
        let two = extended_volume(&c, &spec, 20_000, 5).unwrap();
        assert!(one.hits > 0);
        let ratio = two.hits as f64 / one.hits as f64;
        let noise = 3.0 * ratio / (one.hits as f64).sqrt();
        assert!(ratio <= 8.0 + noise, "T = {t}: {ratio}");
    }
}

#[test]
fn exact_laws_are_recovered() {
    let mut power = Vec::new();
    let mut expo = Vec::new();
    for &eps in &[0.1f64, 0.05, 0.02] {
        for &t in &[2.0f64, 4.0, 8.0] {
            power.push((eps, t, eps * eps * t * t * t));
            expo.push((eps, t, eps.powi(3) * (3.0 * 0.96 * t).exp()));
        }
    }
    let f = scaling_fit(&power, TimeLaw::Power).unwrap();
    assert!((f.a_eps - 2.0).abs() < 1e-10 && (f.b_t - 3.0).abs() < 1e-10);
    assert!(f.residual < 1e-12);
    let f = scaling_fit(&expo, TimeLaw::Exponential).unwrap();
    assert!((f.a_eps - 3.0).abs() < 1e-10 && (f.b_t - 2.88).abs() < 1e-10);
}

#[test]
fn degenerate_designs_are_rejected() {
    // T = ε⁻² on every row: log T is collinear with log ε.
    let rows: Vec<_> = [0.1, 0.05, 0.02, 0.01, 0.005, 0.002]
        .iter()
        .map(|&e: &f64| (e, e.powi(-2), e))
        .collect();
    assert!(matches!(
        scaling_fit(&rows, TimeLaw::Power),
        Err(LabError::RankDeficient(_))
    ));
    assert!(scaling_fit(&rows[..5], TimeLaw::Power).is_err());
    let two_t: Vec<_> = (0..6)
        .map(|i| (0.1 / (i + 1) as f64, 2.0 + (i % 2) as f64, 1.0))
        .collect();
    assert!(matches!(
        scaling_fit(&two_t, TimeLaw::Power),
        Err(LabError::Insufficient(_))
    ));
    let mut zero = rows.clone();
    zero[0].2 = 0.0;
    assert!(scaling_fit(&zero, TimeLaw::Power).is_err());
}

fn fake(eps: f64, t: f64, volume: f64, half: f64) -> RecurrenceEstimate {
    RecurrenceEstimate {
        spec: RecurrenceSpec {
            t,
            eps,
            t_min: 0.0,
            surrogate_factor: 2.0,
            lipschitz: 1.0,
        },
        volume,
        ci_low: (volume - half).max(0.0),
        ci_high: volume + half,
        samples: 1000,
        seed: 0,
        hits: 0,
        failed_samples: 0,
    }
}

#[test]
fn bound_check_outcomes() {
    let zeros: Vec<_> = (0..4).map(|i| fake(0.1, 2.0 + i as f64, 0.0, 0.0)).collect();
    assert!(bound_check(&zeros, VolumeLaw::lie_group(2), 0).unwrap().pass);
    let exact: Vec<_> = [0.1, 0.05]
        .iter()
        .flat_map(|&e| [2.0, 4.0].map(move |t| fake(e, t, 3.0 * e * t * t, 0.0)))
        .collect();
    let ok = bound_check(&exact, VolumeLaw::lie_group(2), 0).unwrap();
    assert!(ok.pass && (ok.constant - 3.0).abs() < 1e-12);
    let wrong = bound_check(
        &exact,
        VolumeLaw::Power {
            eps_exp: 3.0,
            time_exp: 0.0,
        },
        0,
    )
    .unwrap();
    assert!(!wrong.pass);
    assert!(!wrong.violations.is_empty());
    assert!(bound_check(&exact, VolumeLaw::lie_group(2), 9).is_err());
    assert_eq!(
        VolumeLaw::anosov(3, 0.5).eval(0.1, 2.0),
        1e-3f64.powf(1.0) * 3f64.exp() * (0.1f64.powi(3) / 1e-3)
    );
}

#[test]
fn monotone_in_eps_and_time() {
    let m = torus2();
    let mut prev_t = 0;
    for t in [8.0, 12.0, 16.0] {
        let mut prev_e = 0;
        for eps in [0.02, 0.04, 0.08] {
            let e = recurrence_volume(&m, &RecurrenceSpec::new(&m, t, eps), 3000, 17).unwrap();
            assert!(e.hits >= prev_e);
            prev_e = e.hits;
        }
        assert!(prev_e >= prev_t);
        prev_t = prev_e;
    }
}

#[test]
fn worker_count_does_not_change_estimates() {
    let m = catmap();
    let spec = RecurrenceSpec::new(&m, 4.0, 0.05);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| recurrence_volume(&m, &spec, 5000, 7).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(3));
    assert_eq!(a, run(8));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn witnesses_lie_in_the_window(
        x in 0.0f64..TAU, y in 0.0f64..TAU, a in 0.0f64..TAU,
        t in 4.0f64..30.0, eps in 0.01f64..0.5,
    ) {
        let m = torus2();
        let spec = RecurrenceSpec::new(&m, t, eps);
        let s = state([x, y], [a.cos(), a.sin()]);
        if let Some(w) = is_recurrent(&m, &s, &spec).unwrap() {
            prop_assert!(w >= spec.t_min && w <= spec.t);
            prop_assert!(m.distance(&m.flow(&s, w).unwrap(), &s) <= eps);
        }
    }

    #[test]
    fn wilson_interval_brackets_the_fraction(hits in 0usize..500, extra in 0usize..500) {
        let n = hits + extra + 1;
        let (lo, hi) = wilson_interval(hits, n);
        let p = hits as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
    }
}

#[test]
fn anchor_skips_empty_rows() {
    let rows = vec![
        fake(0.1, 4.0, 0.0, 0.0),
        fake(0.05, 8.0, 0.2, 0.0),
        fake(0.1, 8.0, 0.4, 0.0),
        fake(0.1, 16.0, 0.9, 0.0),
    ];
    assert_eq!(default_anchor(&rows), Some(2));
    assert_eq!(default_anchor(&rows[..1]), None);
}
