use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;

use super::*;
use crate::lattice::Lattice;
use crate::models::ModelKind;

fn torus2() -> FlowModel {
    FlowModel::torus(Lattice::cubic(2, 2.0 * PI).unwrap())
}

fn catmap() -> FlowModel {
    FlowModel::cat_map([[2, 1], [1, 1]], 1.0).unwrap()
}

/// Larger root of the characteristic polynomial `x² − tr·x + det`.
fn dominant_log_eigenvalue(a: [[i64; 2]; 2]) -> f64 {
    let tr = (a[0][0] + a[1][1]) as f64;
    let det = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) as f64;
    ((tr + (tr * tr - 4.0 * det).sqrt()) / 2.0).ln()
}

/// Entropy of the base map from periodic points: `#Fix(Aⁿ) = |tr Aⁿ − 2|`.
fn periodic_point_entropy(model: &FlowModel, n: i64) -> f64 {
    let ModelKind::CatMapSuspension(c) = model.kind() else {
        unreachable!()
    };
    let p = c.power(n).unwrap();
    ((p[0][0] + p[1][1] - 2).abs() as f64).ln() / n as f64
}

#[test]
fn expansion_rates() {
    let lam = dominant_log_eigenvalue([[2, 1], [1, 1]]);
    assert!((lam - 0.9624).abs() < 1e-4);
    let c = max_expansion_rate(&catmap(), 30.0, 100, 1).unwrap();
    assert!((c.rate - lam).abs() < 0.02 * lam, "{c:?}");
    assert!(!c.polynomial);

    let t = max_expansion_rate(&torus2(), 100.0, 100, 1).unwrap();
    // ‖[[1, t], [0, 1]]‖ ≈ t.
    assert!(t.rate <= 0.05 && (t.rate - 100f64.ln() / 100.0).abs() < 1e-3, "{t:?}");
    assert!(t.polynomial);

    let s = max_expansion_rate(&FlowModel::sphere3(), 30.0, 100, 1).unwrap();
    assert!(s.rate <= 0.05 && s.polynomial, "{s:?}");

    assert!(max_expansion_rate(&torus2(), 9.0, 100, 1).is_err());
    assert!(max_expansion_rate(&torus2(), 10.0, 99, 1).is_err());
}

#[test]
fn lyapunov_spectra() {
    let lam = dominant_log_eigenvalue([[2, 1], [1, 1]]);
    let c = catmap();
    let s = sample_state(&c, 3, 0);
    let l = lyapunov_spectrum(&c, &s, 200.0, 0.5).unwrap();
    for (got, want) in l.iter().zip([lam, 0.0, -lam]) {
        assert!((got - want).abs() < 0.02, "{l:?}");
    }
    for m in [torus2(), FlowModel::sphere3()] {
        let s = sample_state(&m, 3, 0);
        let l = lyapunov_spectrum(&m, &s, 200.0, 0.5).unwrap();
        assert_eq!(l.len(), m.level_dim());
        assert!(l.iter().all(|x| x.abs() < 0.05), "{} {l:?}", m.label());
    }
    assert!(lyapunov_spectrum(&c, &s, 200.0, 0.05).is_err());
    assert!(lyapunov_spectrum(&c, &s, 20.0, 0.5).is_err());
}

#[test]
fn chi_examples() {
    assert_eq!(positive_sum_chi(&[0.0, 0.0, 0.0], &[1, 1, 1]).unwrap(), 0.0);
    assert_eq!(positive_sum_chi(&[0.9624, 0.0, -0.9624], &[1, 1, 1]).unwrap(), 0.9624);
    assert_eq!(positive_sum_chi(&[2.0, 1.0, -3.0], &[2, 1, 1]).unwrap(), 5.0);
    assert_eq!(positive_sum_chi(&[5e-7], &[1]).unwrap(), 0.0);
    assert_eq!(positive_sum_chi(&[1.0, 2.0], &[1]), Err(LabError::LengthMismatch(2, 1)));
}

fn catmap_entropy() -> &'static EntropyEstimate {
    static E: OnceLock<EntropyEstimate> = OnceLock::new();
    E.get_or_init(|| {
        let cfg = InvariantConfig::default();
        bowen_entropy(&catmap(), &cfg.t_list, &cfg.eps_list, cfg.entropy_samples, 11).unwrap()
    })
}

#[test]
fn catmap_entropy_matches_periodic_points() {
    let c = catmap();
    let oracle = periodic_point_entropy(&c, 40);
    assert!((oracle - 0.9624).abs() < 1e-3);
    let e = catmap_entropy();
    assert!((e.h_top - oracle).abs() < 0.15 * oracle, "{e:?}");
}

#[test]
fn separated_counts_are_monotone() {
    let e = catmap_entropy();
    for a in &e.table {
        for b in &e.table {
            if a.t <= b.t && a.eps >= b.eps {
                assert!(a.n <= b.n, "{a:?} {b:?}");
            }
        }
    }
}

#[test]
fn torus_entropy_vanishes() {
    let e = bowen_entropy(&torus2(), &[20.0, 40.0, 80.0], &[2.0, 1.5], 4000, 2).unwrap();
    assert!(e.h_top <= 0.05, "{e:?}");
}

#[test]
fn tiny_pool_starves() {
    let r = bowen_entropy(&catmap(), &[1.0, 2.0, 3.0], &[0.3, 0.2], 10, 1);
    assert!(matches!(r, Err(LabError::SampleStarvation(10))), "{r:?}");
    assert!(bowen_entropy(&catmap(), &[1.0, 2.0], &[0.3, 0.2], 100, 1).is_err());
    assert!(bowen_entropy(&catmap(), &[1.0, 2.0, 3.0], &[0.2, 0.3], 100, 1).is_err());
}

#[test]
fn ehrenfest_examples() {
    assert_eq!(ehrenfest_time(0.9624, 0.01, 1e-3, true).unwrap(), None);
    let t = ehrenfest_time(0.9624f64, 0.01, 1e-3, false).unwrap().unwrap();
    assert!((t - 7.1038).abs() < 1e-4);
    let near_one = ehrenfest_time(0.9624f64, 0.01, 1.0 - 1e-12, false).unwrap().unwrap();
    assert!(near_one < 1e-11);
}

fn report(lambda_max: f64, lyapunov: Vec<f64>, h_top: f64, m: usize) -> InvariantReport {
    let chi = positive_sum_chi(&lyapunov, &vec![1; lyapunov.len()]).unwrap();
    InvariantReport {
        lambda_max,
        lyapunov,
        chi,
        h_top,
        m,
        t_horizon: 30.0,
        epsilon_list: vec![0.35, 0.25],
        t_list: vec![1.0, 2.0, 3.0],
        polynomial: false,
        entropy_caveat: false,
    }
}

#[test]
fn inequality_examples() {
    let flat = report(0.0, vec![0.0; 3], 0.0, 3);
    assert!(inequality_report(&flat, false).iter().all(|c| c.pass));
    let cat = report(0.9624, vec![0.9624, 0.0, -0.9624], 0.9624, 3);
    let checks = inequality_report(&cat, true);
    assert_eq!(checks.len(), 3);
    assert!(checks.iter().all(|c| c.pass), "{checks:?}");
    let lower = checks.iter().find(|c| c.name.starts_with("(m/4)")).unwrap();
    assert!((lower.lhs - 0.7218).abs() < 1e-12);
    let bad = report(1.0, vec![1.0, 0.0, -1.0], 5.0, 3);
    let checks = inequality_report(&bad, false);
    assert!(!checks.iter().find(|c| c.name == "h_top <= m*lambda_max").unwrap().pass);
}

#[test]
fn report_validation() {
    assert!(report(0.9624, vec![0.9624, 0.0, -0.9624], 0.9, 3).validate().is_ok());
    assert!(report(1.0, vec![0.0, 1.0, -1.0], 0.9, 3).validate().is_err());
    let mut r = report(1.0, vec![1.0, 0.0, -1.0], 0.9, 3);
    r.chi = 1.5;
    assert!(r.validate().is_err());
    r.chi = f64::NAN;
    assert!(r.validate().is_err());
}

#[test]
fn model_invariant_properties() {
    for m in [catmap(), torus2(), FlowModel::sphere3()] {
        let s = sample_state(&m, 5, 0);
        let l = lyapunov_spectrum(&m, &s, 100.0, 0.5).unwrap();
        assert!(l.iter().sum::<f64>().abs() <= 0.05, "{} {l:?}", m.label());
        let e = max_expansion_rate(&m, 30.0, 100, 5).unwrap();
        assert!(e.rate >= l[0] - 0.05, "{} {e:?} {l:?}", m.label());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ehrenfest_identity(lam in 0.0f64..5.0, ell in 1e-4f64..2.0, h in 1e-9f64..0.999) {
        let t = ehrenfest_time(lam, ell, h, false).unwrap().unwrap();
        prop_assert_eq!(t, h.ln().abs() / (lam + ell));
    }
}
